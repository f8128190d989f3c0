#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pscg/effects.hpp"
#include "pscg/penalty_cv.hpp"

namespace pscg {

struct EstimationOptions {
  // Clusters barred from every donor pool (placebo runs exclude the cluster
  // that really received the treatment).
  std::vector<std::string> excluded_donor_clusters;
  bool standardize_features = false;
  SolverOptions solver;
};

// Everything one estimation pass produces for one outcome variable, for the
// panel's current treated unit (real or pseudo).
struct EstimationResult {
  std::string outcome_variable;
  std::vector<int> post_times;
  PenaltyConfig penalties;

  std::map<std::string, CounterfactualSeries> zero_imputations;  // per treated-cluster unit
  std::optional<CounterfactualSeries> star_imputation;

  EffectSeries direct;
  std::map<std::string, EffectSeries> spillover_individual;
  std::optional<EffectSeries> spillover_average;
  std::optional<EffectSeries> unrealized;
  std::optional<EffectSeries> net;

  std::vector<std::string> donor_pool;  // cross-cluster donors, ascending
  bool unit_level_features_only = false;  // singleton pseudo cluster fallback
  std::vector<std::string> warnings;
};

// Runs the estimation pipeline for the panel's treated unit: builds features,
// solves the weight problems at the given penalties, imputes the missing
// potential outcomes and assembles every estimand the cluster supports.
// A singleton (pseudo) treated cluster yields the direct effect only, from
// unit-level features.
EstimationResult estimate_effects(const PanelDataset& ds, const FeatureSpec& spec,
                                  const PenaltyConfig& penalties,
                                  const EstimationOptions& opts = {});

// Exact accounting identities (direct = observed - imputed, average spillover
// = mean of the individual ones, net = direct - unrealized); throws if any is
// violated. Called by estimate_effects on every run.
void verify_effect_identities(const PanelDataset& ds, const EstimationResult& result);

// The cross-cluster donor pool for the panel's current treated cluster:
// control units outside it and outside the excluded clusters; units in
// singleton clusters are skipped unless unit-level features are in use.
std::vector<std::string> cross_cluster_donor_pool(const PanelDataset& ds,
                                                  const std::vector<std::string>& excluded_clusters,
                                                  bool unit_level_features);

}  // namespace pscg
