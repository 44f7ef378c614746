#include "hfslab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hfslab {

namespace {

double mean_of(const std::vector<double>& y, const std::vector<std::int64_t>& rows) {
  double s = 0;
  for (auto r : rows) s += y[static_cast<std::size_t>(r)];
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

}  // namespace

int GbtRegressor::build_node(const Mat& x, const std::vector<double>& residual,
                             std::vector<std::int64_t>& rows, int depth,
                             Tree& tree) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({});
  const double node_mean = mean_of(residual, rows);
  tree.nodes[static_cast<std::size_t>(id)].value = node_mean;

  const auto n = static_cast<std::int64_t>(rows.size());
  if (depth >= cfg_.max_depth || n < 2 * cfg_.min_leaf) return id;

  double node_sse = 0;
  for (auto r : rows) {
    const double d = residual[static_cast<std::size_t>(r)] - node_mean;
    node_sse += d * d;
  }
  if (node_sse <= 0.0) return id;

  // exact greedy split: best (feature, threshold) by SSE reduction, scanning
  // rows sorted by (value, row index) so equal gains resolve identically on
  // every run
  int best_feature = -1;
  double best_threshold = 0, best_gain = 0;
  std::int64_t best_split_pos = -1;
  std::vector<std::int64_t> order(rows);
  std::vector<std::int64_t> best_order;
  const double total_sum = node_mean * static_cast<double>(n);

  for (int f = 0; f < static_cast<int>(x.cols); ++f) {
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
      const double va = x(a, f), vb = x(b, f);
      if (va != vb) return va < vb;
      return a < b;
    });
    double left_sum = 0;
    for (std::int64_t pos = 0; pos + 1 < n; ++pos) {
      left_sum += residual[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])];
      const double vl = x(order[static_cast<std::size_t>(pos)], f);
      const double vr = x(order[static_cast<std::size_t>(pos + 1)], f);
      if (vl == vr) continue;  // not a valid boundary
      const std::int64_t nl = pos + 1, nr = n - nl;
      if (nl < cfg_.min_leaf || nr < cfg_.min_leaf) continue;
      const double right_sum = total_sum - left_sum;
      // SSE reduction = sum_l^2/n_l + sum_r^2/n_r - sum^2/n
      const double gain = left_sum * left_sum / static_cast<double>(nl) +
                          right_sum * right_sum / static_cast<double>(nr) -
                          total_sum * total_sum / static_cast<double>(n);
      if (gain > best_gain + 1e-12) {
        best_gain = gain;
        best_feature = f;
        best_threshold = 0.5 * (vl + vr);
        best_split_pos = nl;
        best_order = order;
      }
    }
  }
  if (best_feature < 0) return id;

  importances_[static_cast<std::size_t>(best_feature)] += best_gain;

  std::vector<std::int64_t> left_rows(best_order.begin(),
                                      best_order.begin() + best_split_pos);
  std::vector<std::int64_t> right_rows(best_order.begin() + best_split_pos,
                                       best_order.end());
  const int left = build_node(x, residual, left_rows, depth + 1, tree);
  const int right = build_node(x, residual, right_rows, depth + 1, tree);
  Node& nd = tree.nodes[static_cast<std::size_t>(id)];
  nd.feature = best_feature;
  nd.threshold = best_threshold;
  nd.left = left;
  nd.right = right;
  return id;
}

void GbtRegressor::fit(const Mat& x, const std::vector<double>& y,
                       const GbtConfig& cfg) {
  if (x.rows != static_cast<std::int64_t>(y.size()))
    throw ConfigError("gbt: row count mismatch");
  if (x.rows < 2) throw ConfigError("gbt: need at least 2 rows");
  cfg_ = cfg;
  trees_.clear();
  importances_.assign(static_cast<std::size_t>(x.cols), 0.0);

  base_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  std::vector<double> pred(y.size(), base_);
  std::vector<double> residual(y.size());
  std::vector<std::int64_t> all_rows(static_cast<std::size_t>(x.rows));
  std::iota(all_rows.begin(), all_rows.end(), 0);

  for (int t = 0; t < cfg_.n_trees; ++t) {
    for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - pred[i];
    Tree tree;
    std::vector<std::int64_t> rows = all_rows;
    build_node(x, residual, rows, 0, tree);
    if (tree.nodes.size() == 1 && tree.nodes[0].feature < 0 &&
        std::fabs(tree.nodes[0].value) < 1e-15)
      break;  // residuals exhausted
    for (std::int64_t r = 0; r < x.rows; ++r) {
      int id = 0;
      while (tree.nodes[static_cast<std::size_t>(id)].feature >= 0) {
        const Node& nd = tree.nodes[static_cast<std::size_t>(id)];
        id = x(r, nd.feature) <= nd.threshold ? nd.left : nd.right;
      }
      pred[static_cast<std::size_t>(r)] +=
          cfg_.shrinkage * tree.nodes[static_cast<std::size_t>(id)].value;
    }
    trees_.push_back(std::move(tree));
  }
}

double GbtRegressor::predict_row(const double* row) const {
  double out = base_;
  for (const Tree& tree : trees_) {
    int id = 0;
    while (tree.nodes[static_cast<std::size_t>(id)].feature >= 0) {
      const Node& nd = tree.nodes[static_cast<std::size_t>(id)];
      id = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    out += cfg_.shrinkage * tree.nodes[static_cast<std::size_t>(id)].value;
  }
  return out;
}

std::vector<double> GbtRegressor::predict(const Mat& x) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows));
  for (std::int64_t r = 0; r < x.rows; ++r) out[static_cast<std::size_t>(r)] = predict_row(x.row(r));
  return out;
}

void LinearProbe::fit(const Mat& x, const std::vector<double>& y,
                      const LassoConfig& cfg) {
  if (x.rows != static_cast<std::int64_t>(y.size()))
    throw ConfigError("lasso: row count mismatch");
  const auto n = static_cast<double>(x.rows);
  const auto d = static_cast<std::size_t>(x.cols);
  mean_.assign(d, 0.0);
  scale_.assign(d, 1.0);
  for (std::int64_t r = 0; r < x.rows; ++r)
    for (std::size_t j = 0; j < d; ++j) mean_[j] += x(r, static_cast<std::int64_t>(j));
  for (auto& m : mean_) m /= n;
  std::vector<double> var(d, 0.0);
  for (std::int64_t r = 0; r < x.rows; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(r, static_cast<std::int64_t>(j)) - mean_[j];
      var[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j)
    scale_[j] = var[j] > 0 ? std::sqrt(var[j] / n) : 1.0;

  const double ymean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  intercept_ = ymean;
  coef_.assign(d, 0.0);

  // cyclic coordinate descent on (1/2n)||y - Xs w||^2 + lambda ||w||_1 with
  // standardized columns (unit variance, so each coordinate update is a
  // plain soft-threshold)
  std::vector<double> resid(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - ymean;
  for (int it = 0; it < cfg.max_iter; ++it) {
    double max_delta = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (var[j] <= 0) continue;  // constant column stays at zero
      double rho = 0;
      for (std::int64_t r = 0; r < x.rows; ++r) {
        const double xs = (x(r, static_cast<std::int64_t>(j)) - mean_[j]) / scale_[j];
        rho += xs * resid[static_cast<std::size_t>(r)];
      }
      rho = rho / n + coef_[j];
      const double nw =
          rho > cfg.lambda ? rho - cfg.lambda : (rho < -cfg.lambda ? rho + cfg.lambda : 0.0);
      const double delta = nw - coef_[j];
      if (delta != 0.0) {
        for (std::int64_t r = 0; r < x.rows; ++r) {
          const double xs = (x(r, static_cast<std::int64_t>(j)) - mean_[j]) / scale_[j];
          resid[static_cast<std::size_t>(r)] -= delta * xs;
        }
        coef_[j] = nw;
      }
      max_delta = std::max(max_delta, std::fabs(delta));
    }
    if (max_delta < cfg.tol) break;
  }
  importances_.resize(d);
  for (std::size_t j = 0; j < d; ++j) importances_[j] = std::fabs(coef_[j]);
}

double LinearProbe::predict_row(const double* row) const {
  double out = intercept_;
  for (std::size_t j = 0; j < coef_.size(); ++j)
    out += coef_[j] * (row[j] - mean_[j]) / scale_[j];
  return out;
}

std::vector<double> LinearProbe::predict(const Mat& x) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows));
  for (std::int64_t r = 0; r < x.rows; ++r) out[static_cast<std::size_t>(r)] = predict_row(x.row(r));
  return out;
}

std::vector<double> FactorProbe::predict(const Mat& x) const {
  return kind == ProbeKind::kTreeEnsemble ? gbt.predict(x) : linear.predict(x);
}

const std::vector<double>& FactorProbe::importances() const {
  return kind == ProbeKind::kTreeEnsemble ? gbt.importances() : linear.importances();
}

ProbeSet fit_probes(const Mat& z, const Mat& y, const ProbeConfig& cfg,
                    std::uint64_t /*seed*/) {
  if (z.rows != y.rows) throw ConfigError("probes: row count mismatch");
  if (z.rows < 100) throw ConfigError("probes: need at least 100 rows");
  ProbeSet set;
  set.importance = Mat(z.cols, y.cols, 0.0);
  for (std::int64_t f = 0; f < y.cols; ++f) {
    std::vector<double> target(static_cast<std::size_t>(y.rows));
    for (std::int64_t r = 0; r < y.rows; ++r) target[static_cast<std::size_t>(r)] = y(r, f);
    FactorProbe probe;
    probe.kind = cfg.kind;
    const auto [mn, mx] = std::minmax_element(target.begin(), target.end());
    if (*mn == *mx) {
      probe.degenerate = true;  // constant factor: nothing to learn
      if (cfg.kind == ProbeKind::kTreeEnsemble) {
        GbtConfig trivial = cfg.gbt;
        trivial.n_trees = 0;
        probe.gbt.fit(z, target, trivial);
      } else {
        LassoConfig trivial = cfg.lasso;
        trivial.max_iter = 0;
        probe.linear.fit(z, target, trivial);
      }
    } else if (cfg.kind == ProbeKind::kTreeEnsemble) {
      probe.gbt.fit(z, target, cfg.gbt);
    } else {
      probe.linear.fit(z, target, cfg.lasso);
    }
    const auto& imp = probe.importances();
    for (std::int64_t i = 0; i < z.cols; ++i)
      set.importance(i, f) = imp[static_cast<std::size_t>(i)];
    set.per_factor.push_back(std::move(probe));
  }
  return set;
}

}  // namespace hfslab
