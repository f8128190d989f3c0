#include "pscg/penalty_cv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace pscg {

LambdaGrid uniform_grid(int n) {
  require(n >= 1, "grid size must be >= 1");
  LambdaGrid g;
  g.values.reserve(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) g.values.push_back(static_cast<double>(k) / static_cast<double>(n));
  g.description = "uniform(" + std::to_string(n) + ") on (0,1]";
  return g;
}

LambdaGrid default_grid() { return uniform_grid(10000); }

LambdaGrid log_uniform_grid(int n, double lo) {
  require(n >= 1, "grid size must be >= 1");
  require(lo > 0.0 && lo < 1.0, "log grid lower bound must be in (0,1)");
  LambdaGrid g;
  if (n == 1) {
    g.values.push_back(1.0);
  } else {
    const double step = std::log(1.0 / lo) / static_cast<double>(n - 1);
    for (int k = 0; k < n; ++k) g.values.push_back(lo * std::exp(step * k));
    g.values.back() = 1.0;
  }
  g.description = "log-uniform(" + std::to_string(n) + ") on [" + std::to_string(lo) + ",1]";
  return g;
}

void PenaltyConfig::check() const {
  for (double v : {lambda_treated, lambda_neighbors, lambda_star})
    require(std::isfinite(v) && v > 0.0 && v <= 1.0, "penalty terms must lie in (0, 1]");
}

double pooled_rmspe(double squared_residual_sum, int n_units, int n_post) {
  require(n_units > 0 && n_post > 0, "rmspe normalizer must be positive");
  return std::sqrt(squared_residual_sum / (static_cast<double>(n_post) * n_units));
}

namespace {

struct PseudoProblem {
  std::string unit;
  std::vector<std::string> donors;  // ids, ascending
  PreparedProblem prepared;
};

// Shared CV engine: every pseudo unit is re-fit at each lambda, squared
// post-period residuals are pooled in a fixed (unit, time) order, and the
// smallest lambda attaining the minimum RMSPE wins.
std::pair<double, CvReport> run_cv(const PanelDataset& ds, const FeatureSpec& spec,
                                   const std::vector<std::string>& pseudo_units,
                                   const std::map<std::string, std::vector<std::string>>& pools,
                                   FeatureMode mode, const LambdaGrid& grid, int normalizer_units,
                                   const std::string& criterion, bool standardize) {
  require(!grid.values.empty(), "empty lambda grid");
  for (std::size_t i = 1; i < grid.values.size(); ++i)
    require(grid.values[i] > grid.values[i - 1], "lambda grid must be strictly ascending");

  CvReport report;
  report.criterion = criterion;

  // One shared layout for everyone involved.
  std::set<std::string> involved(pseudo_units.begin(), pseudo_units.end());
  for (const auto& [unit, pool] : pools) involved.insert(pool.begin(), pool.end());
  std::vector<std::string> involved_v(involved.begin(), involved.end());
  std::vector<FeatureVector> feats = build_feature_vectors(ds, spec, involved_v, mode);
  if (standardize) feats = standardize_dimensions(feats);
  std::map<std::string, const FeatureVector*> feat_of;
  for (std::size_t i = 0; i < involved_v.size(); ++i) feat_of[involved_v[i]] = &feats[i];

  std::vector<PseudoProblem> problems;
  for (const auto& u : pseudo_units) {
    const auto& pool = pools.at(u);
    if (pool.empty()) {
      CvPseudoUnitDetail d;
      d.unit = u;
      d.skipped = true;
      d.reason = "no out-of-cluster matched donors";
      report.details.push_back(d);
      report.warnings.push_back("pseudo-treated unit " + u +
                                " skipped: no out-of-cluster matched donors");
      continue;
    }
    Eigen::MatrixXd donors(feat_of.at(u)->values.size(), static_cast<Eigen::Index>(pool.size()));
    for (std::size_t j = 0; j < pool.size(); ++j)
      donors.col(static_cast<Eigen::Index>(j)) = feat_of.at(pool[j])->values;
    problems.push_back({u, pool, PreparedProblem(std::move(donors), feat_of.at(u)->values)});
  }
  require(!problems.empty(),
          "penalty cross-validation failed: every pseudo-treated unit was skipped");

  const auto post = ds.post_times();
  const int n_included = static_cast<int>(problems.size());
  const int n_norm = normalizer_units > 0 ? normalizer_units : n_included;

  SolverOptions opts;
  opts.check_uniqueness = false;

  auto residuals_at = [&](const PseudoProblem& p, double lambda) {
    const WeightVector w = p.prepared.solve(lambda, opts);
    std::vector<double> res;
    res.reserve(post.size());
    for (int t : post) {
      double fitted = 0.0;
      for (std::size_t j = 0; j < p.donors.size(); ++j)
        fitted += w.weights(static_cast<Eigen::Index>(j)) * ds.value(p.donors[j], spec.outcome, t);
      res.push_back(ds.value(p.unit, spec.outcome, t) - fitted);
    }
    return res;
  };

  report.curve.reserve(grid.values.size());
  double best_lambda = grid.values.front();
  double best_rmspe = std::numeric_limits<double>::infinity();
  for (double lambda : grid.values) {
    double ss = 0.0;
    for (const auto& p : problems)
      for (double r : residuals_at(p, lambda)) ss += r * r;
    const double rmspe = pooled_rmspe(ss, n_norm, static_cast<int>(post.size()));
    report.curve.push_back({lambda, rmspe});
    if (rmspe < best_rmspe) {  // strict: ties keep the smaller lambda
      best_rmspe = rmspe;
      best_lambda = lambda;
    }
  }
  report.chosen_lambda = best_lambda;
  report.chosen_rmspe = best_rmspe;

  for (const auto& p : problems) {
    CvPseudoUnitDetail d;
    d.unit = p.unit;
    d.residuals = residuals_at(p, best_lambda);
    double ss = 0.0;
    for (double r : d.residuals) ss += r * r;
    d.rmspe = pooled_rmspe(ss, 1, static_cast<int>(post.size()));
    report.details.push_back(std::move(d));
  }
  std::stable_sort(report.details.begin(), report.details.end(),
                   [](const CvPseudoUnitDetail& a, const CvPseudoUnitDetail& b) {
                     return a.unit < b.unit;
                   });
  return {best_lambda, report};
}

}  // namespace

std::pair<double, CvReport> cv_lambda_cross(const PanelDataset& ds, const FeatureSpec& spec,
                                            const MatchResult& matches, CvTarget which,
                                            const LambdaGrid& grid, bool standardize) {
  require(ds.n_post_periods() >= 1, "cross-validation needs post-treatment periods");
  const std::vector<std::string>& pool_set =
      which == CvTarget::treated ? matches.h_treated : matches.h_union;
  require(!pool_set.empty(), "empty match set for penalty cross-validation");

  std::map<std::string, std::vector<std::string>> pools;
  for (const auto& u : pool_set) {
    std::vector<std::string> pool;
    for (const auto& d : pool_set)
      if (ds.cluster_of(d) != ds.cluster_of(u)) pool.push_back(d);
    pools[u] = std::move(pool);
  }
  return run_cv(ds, spec, pool_set, pools, FeatureMode::cross_cluster, grid,
                /*normalizer set by skips*/ 0,
                which == CvTarget::treated ? "treated" : "neighbors", standardize);
}

std::pair<double, CvReport> cv_lambda_star(const PanelDataset& ds, const FeatureSpec& spec,
                                           const LambdaGrid& grid, bool standardize) {
  const auto neighbors = ds.neighbors_of_treated();
  require(neighbors.size() >= 2,
          "within-cluster CV undefined: treated cluster needs at least 3 units");

  std::map<std::string, std::vector<std::string>> pools;
  for (const auto& u : neighbors) {
    std::vector<std::string> pool;
    for (const auto& d : neighbors)
      if (d != u) pool.push_back(d);
    pools[u] = std::move(pool);
  }
  return run_cv(ds, spec, neighbors, pools, FeatureMode::within_cluster, grid,
                static_cast<int>(neighbors.size()), "star", standardize);
}

}  // namespace pscg
