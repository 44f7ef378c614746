#include "hfslab/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hfslab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

void save_checkpoint(const std::vector<const Parameter*>& params,
                     const std::string& prefix) {
  nlohmann::json manifest = nlohmann::json::array();
  std::ofstream bin(prefix + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw ContractError("checkpoint: cannot open " + prefix + ".bin");
  std::uint64_t offset = 0;
  for (const Parameter* p : params) {
    manifest.push_back({{"name", p->name}, {"shape", p->shape}, {"offset", offset}});
    bin.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    offset += p->value.size() * sizeof(double);
  }
  if (!bin) throw ContractError("checkpoint: short write to " + prefix + ".bin");
  bin.close();

  std::ofstream js(prefix + ".json", std::ios::trunc);
  if (!js) throw ContractError("checkpoint: cannot open " + prefix + ".json");
  js << nlohmann::json{{"format", "hfslab-checkpoint-v1"},
                       {"dtype", "f64le"},
                       {"tensors", manifest}}
            .dump(2)
     << "\n";
}

void load_checkpoint(const std::vector<Parameter*>& params,
                     const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw ContractError("checkpoint: cannot open " + prefix + ".json");
  nlohmann::json doc = nlohmann::json::parse(js);
  if (doc.value("dtype", "") != "f64le")
    throw ContractError("checkpoint: unsupported dtype in " + prefix + ".json");

  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw ContractError("checkpoint: cannot open " + prefix + ".bin");

  for (Parameter* p : params) {
    const nlohmann::json* entry = nullptr;
    for (const auto& e : doc.at("tensors"))
      if (e.at("name").get<std::string>() == p->name) {
        entry = &e;
        break;
      }
    if (!entry)
      throw ConfigError("checkpoint: no tensor named '" + p->name + "' in " +
                        prefix + ".json");
    const Shape shape = entry->at("shape").get<Shape>();
    if (shape != p->shape)
      throw ConfigError("checkpoint: shape mismatch for '" + p->name +
                        "': file has " + shape_str(shape) + ", parameter has " +
                        shape_str(p->shape));
    bin.seekg(static_cast<std::streamoff>(entry->at("offset").get<std::uint64_t>()));
    bin.read(reinterpret_cast<char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (!bin)
      throw ContractError("checkpoint: short read for '" + p->name + "'");
  }
}

}  // namespace hfslab
