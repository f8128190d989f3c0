#pragma once

#include <Eigen/Core>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pscg/common.hpp"

namespace pscg {

// One record of a long-format panel: (unit, cluster, time, variable) -> value.
struct PanelObservation {
  std::string unit;
  std::string cluster;
  int time = 0;
  std::string variable;
  double value = 0.0;
};

struct UnitRecord {
  std::string id;
  std::string cluster;
};

// Which variables enter feature vectors and matching rows for one run: a
// single outcome of interest plus an ordered list of covariates. When a panel
// carries several outcome variables, the pipeline runs once per outcome with
// the remaining outcomes appended to the covariate list.
struct FeatureSpec {
  std::string outcome;
  std::vector<std::string> covariates;
};

// cross_cluster stacks unit and neighborhood blocks; within_cluster keeps
// unit-level blocks only.
enum class FeatureMode { cross_cluster, within_cluster };

enum class FeatureRole {
  unit_outcome,
  neighborhood_outcome,
  unit_covariate,
  neighborhood_covariate,
};

struct FeatureLabel {
  FeatureRole role{};
  std::string variable;
  int time = 0;
  bool operator==(const FeatureLabel&) const = default;
};

using FeatureLayout = std::vector<FeatureLabel>;

// Stacked pre-treatment feature vector of one unit. All vectors entering one
// solve share a layout (same labels in the same order).
struct FeatureVector {
  std::string owner;
  Eigen::VectorXd values;
  std::shared_ptr<const FeatureLayout> layout;
};

bool same_layout(const FeatureVector& a, const FeatureVector& b);

// Within-cluster allocation over the treated cluster's units: nobody treated
// (all-zero), the actual assignment (treated unit exposed), or a
// counterfactual assignment with some other cluster member exposed.
class TreatmentAllocation {
 public:
  enum class Kind { all_zero, actual, counterfactual };

  static TreatmentAllocation all_zero() { return {Kind::all_zero, {}}; }
  static TreatmentAllocation actual(std::string treated_unit) {
    return {Kind::actual, std::move(treated_unit)};
  }
  // A named neighbor exposed instead of the treated unit.
  static TreatmentAllocation counterfactual(std::string neighbor) {
    return {Kind::counterfactual, std::move(neighbor)};
  }
  // e(*): some neighbor exposed, unspecified under the constant-spillover
  // reading.
  static TreatmentAllocation counterfactual_any() { return {Kind::counterfactual, {}}; }

  Kind kind() const { return kind_; }
  // The single exposed unit, empty for the all-zero allocation.
  const std::optional<std::string>& exposed_unit() const { return unit_; }
  std::string label() const;

  bool operator==(const TreatmentAllocation&) const = default;

 private:
  TreatmentAllocation(Kind kind, std::optional<std::string> unit)
      : kind_(kind), unit_(std::move(unit)) {}

  Kind kind_;
  std::optional<std::string> unit_;
};

// Label of an observed outcome: the unit's own exposure plus the allocation
// of the rest of its cluster.
struct OutcomeRole {
  int exposure = 0;
  TreatmentAllocation allocation = TreatmentAllocation::all_zero();
  bool operator==(const OutcomeRole&) const = default;
};

// Immutable clustered unit x time panel with a single treated unit exposed
// from t0+1 onward. Construction validates completeness (outcomes on every
// period, covariates on every pre-treatment period) and the treatment
// bookkeeping; all accessors are pure reads, safe to call concurrently.
class PanelDataset {
 public:
  static PanelDataset create(const std::vector<PanelObservation>& rows,
                             std::vector<std::string> outcome_variables,
                             std::vector<std::string> covariate_variables,
                             const std::string& treated_unit, int t0);

  // Re-roots the panel at another unit for placebo studies: that unit's
  // cluster becomes the treated cluster. Unlike create(), the pseudo treated
  // cluster may be a singleton; callers must then skip spillover estimands.
  PanelDataset with_treated_unit(const std::string& unit) const;

  std::size_t n_units() const { return units_.size(); }
  const std::vector<UnitRecord>& units() const { return units_; }
  const std::vector<std::string>& clusters() const { return clusters_; }
  const std::vector<std::string>& cluster_units(const std::string& cluster) const;
  const std::string& cluster_of(const std::string& unit) const;
  bool has_unit(const std::string& unit) const;

  const std::string& treated_unit() const { return treated_unit_; }
  const std::string& treated_cluster() const { return treated_cluster_; }
  // Untreated units of the treated cluster, ascending by id.
  std::vector<std::string> neighbors_of_treated() const;

  const std::vector<int>& times() const { return times_; }
  int t0() const { return t0_; }
  std::vector<int> pre_times() const;
  std::vector<int> post_times() const;
  int n_pre_periods() const;
  int n_post_periods() const;

  const std::vector<std::string>& outcome_variables() const { return outcome_variables_; }
  const std::vector<std::string>& covariate_variables() const { return covariate_variables_; }
  bool has_variable(const std::string& variable) const;
  bool is_outcome(const std::string& variable) const;

  // Value lookup; throws "incomplete panel" when the cell is absent.
  double value(const std::string& unit, const std::string& variable, int t) const;
  bool has_value(const std::string& unit, const std::string& variable, int t) const;

  // Long-format export in a deterministic order (unit, variable, time).
  std::vector<PanelObservation> to_rows() const;

  bool operator==(const PanelDataset& other) const;

 private:
  PanelDataset() = default;
  void index_units();
  std::size_t unit_idx(const std::string& unit) const;
  std::size_t time_idx(int t) const;
  std::size_t var_idx(const std::string& variable) const;

  std::vector<UnitRecord> units_;               // ascending by id
  std::vector<std::string> clusters_;           // ascending
  std::map<std::string, std::vector<std::string>> cluster_members_;
  std::vector<int> times_;                      // contiguous ascending
  int t0_ = 0;
  std::vector<std::string> outcome_variables_;
  std::vector<std::string> covariate_variables_;
  std::string treated_unit_;
  std::string treated_cluster_;
  // One (units x times) matrix per variable; NaN marks an absent cell
  // (covariates may be absent after t0).
  std::vector<Eigen::MatrixXd> values_;
  std::map<std::string, std::size_t> unit_index_;
  std::map<std::string, std::size_t> variable_index_;
};

// Leave-one-out mean of `variable` at time t over the unit's own cluster.
// Errors: "no neighbors" for singleton clusters, "incomplete panel" for
// missing cells.
double neighborhood_average(const PanelDataset& ds, const std::string& unit,
                            const std::string& variable, int t);

// Stacks pre-treatment blocks in the fixed order: unit outcomes,
// neighborhood outcomes, unit covariates, neighborhood covariates (each
// block variable-major, time-minor). within_cluster mode omits the
// neighborhood blocks.
FeatureVector build_feature_vector(const PanelDataset& ds, const FeatureSpec& spec,
                                   const std::string& unit, FeatureMode mode);

// Batch variant; all returned vectors share one layout object.
std::vector<FeatureVector> build_feature_vectors(const PanelDataset& ds,
                                                 const FeatureSpec& spec,
                                                 const std::vector<std::string>& units,
                                                 FeatureMode mode);

std::shared_ptr<const FeatureLayout> make_feature_layout(const PanelDataset& ds,
                                                         const FeatureSpec& spec,
                                                         FeatureMode mode);

// Classifies the observed value of (unit, t) as one of the potential
// outcomes: (1, z) for the treated unit post treatment, (0, e(1)) for its
// cluster mates post treatment, (0, z) otherwise.
OutcomeRole observed_outcome_role(const PanelDataset& ds, const std::string& unit, int t);

// Validates a FeatureSpec against the panel's variables.
void check_feature_spec(const PanelDataset& ds, const FeatureSpec& spec);

// Canonical spec for a run on one outcome: the panel's other outcome
// variables act as covariates, followed by the declared covariates.
FeatureSpec feature_spec_for_outcome(const PanelDataset& ds, const std::string& outcome);

}  // namespace pscg
