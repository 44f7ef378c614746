#include "hfslab/dataset_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hfslab {

static_assert(std::endian::native == std::endian::little,
              "dataset format assumes a little-endian host");

namespace {

template <class T>
void write_blob(const std::string& path, const std::vector<T>& v) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("dataset: cannot open " + path);
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!f) throw ContractError("dataset: short write to " + path);
}

template <class T>
void read_blob(const std::string& path, std::vector<T>& v) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractError("dataset: cannot open " + path);
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!f) throw ContractError("dataset: short read from " + path);
}

}  // namespace

void save_dataset(const FactorDataset& d, const WorldConfig& world,
                  const CorrelationSpec& corr, std::uint64_t seed,
                  const std::string& basename) {
  nlohmann::json sidecar = {
      {"format", "hfslab-dataset-v1"},
      {"world", world},
      {"correlation", corr},
      {"seed", seed},
      {"n", d.factors.rows},
      {"k", d.factors.cols},
      {"observation_dim", d.observations.cols},
      {"factors_file", basename + ".factors.bin"},
      {"observations_file", basename + ".obs.bin"},
  };
  std::ofstream js(basename + ".json", std::ios::trunc);
  if (!js) throw ContractError("dataset: cannot open " + basename + ".json");
  js << sidecar.dump(2) << "\n";
  write_blob(basename + ".factors.bin", d.factors.a);
  write_blob(basename + ".obs.bin", d.observations.a);
}

LoadedDataset load_dataset(const std::string& basename) {
  std::ifstream js(basename + ".json");
  if (!js) throw ContractError("dataset: cannot open " + basename + ".json");
  nlohmann::json sidecar = nlohmann::json::parse(js);
  if (sidecar.value("format", "") != "hfslab-dataset-v1")
    throw ContractError("dataset: unknown format in " + basename + ".json");

  LoadedDataset out;
  sidecar.at("world").get_to(out.world);
  sidecar.at("correlation").get_to(out.corr);
  out.seed = sidecar.value("seed", std::uint64_t{0});
  const std::int64_t n = sidecar.at("n").get<std::int64_t>();
  const std::int64_t k = sidecar.at("k").get<std::int64_t>();
  const std::int64_t od = sidecar.at("observation_dim").get<std::int64_t>();

  out.data.factors = IMat(n, k);
  read_blob(sidecar.at("factors_file").get<std::string>(), out.data.factors.a);
  out.data.observations = Mat(n, od);
  read_blob(sidecar.at("observations_file").get<std::string>(),
            out.data.observations.a);

  FactorWorld world(out.world);
  out.data.normalized = world.normalize(out.data.factors);
  return out;
}

void save_csv(const Mat& m, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ContractError("csv: cannot open " + path);
  char buf[64];
  for (std::int64_t r = 0; r < m.rows; ++r) {
    for (std::int64_t c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      f << (c ? "," : "") << buf;
    }
    f << "\n";
  }
}

Mat load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ContractError("csv: cannot open " + path);
  std::vector<double> vals;
  std::int64_t rows = 0, cols = -1;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::int64_t c = 0;
    while (std::getline(ss, cell, ',')) {
      vals.push_back(std::stod(cell));
      ++c;
    }
    if (cols == -1) cols = c;
    if (c != cols) throw ContractError("csv: ragged rows in " + path);
    ++rows;
  }
  Mat m(rows, cols == -1 ? 0 : cols);
  m.a = std::move(vals);
  return m;
}

}  // namespace hfslab
