#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pscg/panel.hpp"
#include "pscg/solver.hpp"

namespace pscg {

// An imputed potential-outcome series for one treated-cluster unit, plus the
// pre-period fit it came from. pre_period_rmspe drives placebo filtering and
// the RMSPE table.
struct CounterfactualSeries {
  std::string unit;
  std::string variable;
  TreatmentAllocation allocation = TreatmentAllocation::all_zero();
  std::vector<int> post_times;
  std::vector<double> values;       // one per post period
  std::vector<int> pre_times;
  std::vector<double> pre_fitted;   // fitted outcome per pre period
  WeightVector weights_used;
  std::vector<std::string> donors_used;
  double pre_period_rmspe = 0.0;
};

enum class Estimand {
  direct,
  spillover_individual,
  spillover_average,
  unrealized,
  net_contrast,
};

std::string estimand_name(Estimand e);

struct EffectSeries {
  Estimand estimand{};
  std::string variable;
  std::string unit;  // focal unit; empty for cluster-level averages
  std::vector<int> periods;
  std::vector<double> values;
  // The two series the effect is a difference of (observed/imputed for unit
  // estimands; the minuend/subtrahend otherwise).
  std::vector<double> observed;
  std::vector<double> imputed;
  double pre_period_rmspe = 0.0;
  std::string note;
};

// Weighted average of donor outcomes: the post-period imputation plus the
// pre-period fitted values and their RMSPE. The all-zero allocation requires
// out-of-cluster donors; the counterfactual allocation is the within-cluster
// synthesis of the treated unit.
CounterfactualSeries impute_control_outcome(const PanelDataset& ds, const std::string& variable,
                                            const std::string& unit, const WeightVector& weights,
                                            const std::vector<std::string>& donors,
                                            const TreatmentAllocation& allocation);

// Observed minus imputed for the treated unit.
EffectSeries direct_effect(const PanelDataset& ds, const CounterfactualSeries& cf);

// Individual spillovers (observed minus imputed per neighbor) and their mean.
std::pair<std::map<std::string, EffectSeries>, EffectSeries> spillover_effects(
    const PanelDataset& ds, const std::map<std::string, CounterfactualSeries>& cfs);

// Within-cluster synthesis minus the treated unit's all-zero imputation;
// reported once for the whole cluster under the constant-spillover reading.
EffectSeries unrealized_spillover(const PanelDataset& ds, const CounterfactualSeries& star_cf,
                                  const CounterfactualSeries& zero_cf);

// direct minus unrealized; positive values mean the realized allocation was
// the better one for the treated unit.
EffectSeries net_contrast(const EffectSeries& direct, const EffectSeries& unrealized);

// Observed-minus-fitted pre-period differences at the unit and neighborhood
// level, one column per synthesized target plus the within-cluster column.
struct BalanceTable {
  std::string variable;
  std::vector<std::string> columns;  // treated, neighbors..., treated (within-cluster)
  std::vector<int> pre_times;
  // Row blocks: level 0 = unit, level 1 = neighborhood. entries[level][time index][column].
  std::vector<std::vector<std::vector<std::optional<double>>>> entries;
};

BalanceTable balance_table(const PanelDataset& ds,
                           const std::map<std::string, CounterfactualSeries>& zero_cfs,
                           const std::optional<CounterfactualSeries>& star_cf);

}  // namespace pscg
