#include "pscg/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace pscg {

std::vector<std::string> cross_cluster_donor_pool(const PanelDataset& ds,
                                                  const std::vector<std::string>& excluded_clusters,
                                                  bool unit_level_features) {
  const std::set<std::string> excluded(excluded_clusters.begin(), excluded_clusters.end());
  std::vector<std::string> pool;
  for (const auto& u : ds.units()) {
    if (u.cluster == ds.treated_cluster()) continue;
    if (excluded.count(u.cluster)) continue;
    if (!unit_level_features && ds.cluster_units(u.cluster).size() < 2) continue;
    pool.push_back(u.id);
  }
  return pool;
}

namespace {

// Weights clamp/renormalize at 1e-9; identities computed from the stored
// components must agree to a few ulps of that arithmetic.
constexpr double kIdentityTol = 1e-9;

void check_identity(double lhs, double rhs, const std::string& what) {
  const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
  require(std::abs(lhs - rhs) <= kIdentityTol * scale, "identity violated: " + what);
}

}  // namespace

void verify_effect_identities(const PanelDataset& ds, const EstimationResult& r) {
  const auto& post = r.post_times;
  for (std::size_t i = 0; i < post.size(); ++i) {
    const double obs = ds.value(ds.treated_unit(), r.outcome_variable, post[i]);
    check_identity(r.direct.values[i], obs - r.zero_imputations.at(ds.treated_unit()).values[i],
                   "direct = observed - imputed");
  }
  if (r.spillover_average) {
    const auto neighbors = ds.neighbors_of_treated();
    for (std::size_t i = 0; i < post.size(); ++i) {
      double sum = 0.0;
      for (const auto& n : neighbors) sum += r.spillover_individual.at(n).values[i];
      check_identity(r.spillover_average->values[i], sum / static_cast<double>(neighbors.size()),
                     "average spillover = mean of individual spillovers");
    }
  }
  if (r.net) {
    for (std::size_t i = 0; i < post.size(); ++i)
      check_identity(r.net->values[i], r.direct.values[i] - r.unrealized->values[i],
                     "net = direct - unrealized");
  }
}

EstimationResult estimate_effects(const PanelDataset& ds, const FeatureSpec& spec,
                                  const PenaltyConfig& penalties, const EstimationOptions& opts) {
  check_feature_spec(ds, spec);
  EstimationResult result;
  result.outcome_variable = spec.outcome;
  result.post_times = ds.post_times();
  result.penalties = penalties;

  const auto cluster_members = ds.cluster_units(ds.treated_cluster());
  const bool singleton = cluster_members.size() < 2;
  result.unit_level_features_only = singleton;
  if (singleton)
    result.warnings.push_back("treated cluster " + ds.treated_cluster() +
                              " is a singleton: direct effect only, unit-level features");
  const FeatureMode mode = singleton ? FeatureMode::within_cluster : FeatureMode::cross_cluster;

  result.donor_pool = cross_cluster_donor_pool(ds, opts.excluded_donor_clusters, singleton);
  require(!result.donor_pool.empty(), "empty donor pool for treated cluster " +
                                          ds.treated_cluster());

  // Targets: treated unit first, then the neighbors.
  std::vector<std::string> targets{ds.treated_unit()};
  const auto neighbors = ds.neighbors_of_treated();
  targets.insert(targets.end(), neighbors.begin(), neighbors.end());

  std::vector<std::string> everyone = targets;
  everyone.insert(everyone.end(), result.donor_pool.begin(), result.donor_pool.end());
  std::vector<FeatureVector> feats = build_feature_vectors(ds, spec, everyone, mode);
  if (opts.standardize_features) feats = standardize_dimensions(feats);

  std::map<std::string, const FeatureVector*> feat_of;
  for (std::size_t i = 0; i < everyone.size(); ++i) feat_of[everyone[i]] = &feats[i];

  std::vector<FeatureVector> donor_feats;
  donor_feats.reserve(result.donor_pool.size());
  for (const auto& d : result.donor_pool) donor_feats.push_back(*feat_of.at(d));

  for (const auto& target : targets) {
    const double lambda =
        target == ds.treated_unit() ? penalties.lambda_treated : penalties.lambda_neighbors;
    const WeightVector w =
        solve_penalized_sc({*feat_of.at(target), donor_feats, lambda}, opts.solver);
    if (!w.unique_within_tol)
      result.warnings.push_back("solver restarts disagree for " + target +
                                ": solution may not be unique");
    result.zero_imputations.emplace(
        target, impute_control_outcome(ds, spec.outcome, target, w, result.donor_pool,
                                       TreatmentAllocation::all_zero()));
  }

  result.direct = direct_effect(ds, result.zero_imputations.at(ds.treated_unit()));

  if (!singleton) {
    std::map<std::string, CounterfactualSeries> neighbor_cfs;
    for (const auto& n : neighbors) neighbor_cfs.emplace(n, result.zero_imputations.at(n));
    auto [individual, average] = spillover_effects(ds, neighbor_cfs);
    result.spillover_individual = std::move(individual);
    result.spillover_average = std::move(average);

    // Within-cluster synthesis of the treated unit from its neighbors.
    std::vector<FeatureVector> within =
        build_feature_vectors(ds, spec, targets, FeatureMode::within_cluster);
    if (opts.standardize_features) within = standardize_dimensions(within);
    std::vector<FeatureVector> xi_donors(within.begin() + 1, within.end());
    const WeightVector xi =
        solve_penalized_sc({within.front(), xi_donors, penalties.lambda_star}, opts.solver);
    if (!xi.unique_within_tol)
      result.warnings.push_back("solver restarts disagree for the within-cluster weights");
    result.star_imputation =
        impute_control_outcome(ds, spec.outcome, ds.treated_unit(), xi, neighbors,
                               TreatmentAllocation::counterfactual_any());
    result.unrealized = unrealized_spillover(ds, *result.star_imputation,
                                             result.zero_imputations.at(ds.treated_unit()));
    result.net = net_contrast(result.direct, *result.unrealized);
  }

  verify_effect_identities(ds, result);
  return result;
}

}  // namespace pscg
