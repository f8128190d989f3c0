#pragma once

#include <map>
#include <string>
#include <vector>

#include "pscg/estimator.hpp"

namespace pscg {

struct PlaceboOptions {
  // Drop the truly treated cluster from every placebo donor pool (its
  // post-period outcomes are treatment-contaminated under interference).
  bool exclude_true_treated_cluster = true;
  EstimationOptions estimation;
};

// One full-pipeline re-run with a control unit cast as pseudo-treated and its
// cluster as pseudo-treated cluster, at the originally selected penalties.
struct PlaceboRun {
  std::string pseudo_unit;
  std::string pseudo_cluster;
  PenaltyConfig penalties;  // always the originally selected terms
  std::map<Estimand, EffectSeries> effects;
  std::map<Estimand, double> pre_period_rmspe;
  bool excluded = false;
  std::string exclusion_reason;
  std::vector<std::string> notes;
};

// Re-runs estimation for every control unit outside the true treated cluster,
// ascending by unit id. Per-unit failures become excluded runs; singleton
// pseudo clusters carry the direct effect only.
std::vector<PlaceboRun> run_placebos(const PanelDataset& ds, const FeatureSpec& spec,
                                     const PenaltyConfig& penalties,
                                     const PlaceboOptions& opts = {});

// Marks runs whose pre-period RMSPE (of the pseudo unit's own all-zero fit)
// exceeds the threshold; a run exactly at the threshold passes.
std::vector<PlaceboRun> filter_by_rmspe(std::vector<PlaceboRun> runs, double threshold = 1.0);

struct PlaceboSummary {
  Estimand estimand{};
  std::string variable;
  std::vector<int> periods;
  std::vector<double> actual;
  std::vector<std::string> placebo_units;            // included runs, ascending
  std::vector<std::vector<double>> placebo_values;   // [period][run]
  std::vector<int> rank;                             // of |actual| from the top, self included
  std::vector<double> p_value;                       // rank / (n + 1)
  double aggregate_statistic = 0.0;                  // mean |actual| over post periods
  double aggregate_p = 0.0;
  int included_count = 0;
};

// Rank-based comparison of the actual effect series against the included
// placebo runs carrying the same estimand and variable.
PlaceboSummary summarize(const EffectSeries& actual, const std::vector<PlaceboRun>& runs);

}  // namespace pscg
