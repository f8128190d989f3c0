#include "pscg/panel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace pscg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

bool same_layout(const FeatureVector& a, const FeatureVector& b) {
  if (!a.layout || !b.layout) return false;
  if (a.layout == b.layout) return true;
  return *a.layout == *b.layout;
}

std::string TreatmentAllocation::label() const {
  switch (kind_) {
    case Kind::all_zero: return "z";
    case Kind::actual: return "e(" + (unit_ ? *unit_ : std::string("1")) + ")";
    case Kind::counterfactual: return unit_ ? "e(" + *unit_ + ")" : "e(*)";
  }
  return "?";
}

PanelDataset PanelDataset::create(const std::vector<PanelObservation>& rows,
                                  std::vector<std::string> outcome_variables,
                                  std::vector<std::string> covariate_variables,
                                  const std::string& treated_unit, int t0) {
  require(!rows.empty(), "panel has no observations");
  require(!outcome_variables.empty(), "at least one outcome variable is required");

  PanelDataset ds;
  ds.outcome_variables_ = std::move(outcome_variables);
  ds.covariate_variables_ = std::move(covariate_variables);

  {
    std::set<std::string> seen;
    for (const auto& v : ds.outcome_variables_)
      require(seen.insert(v).second, "duplicate variable in config: " + v);
    for (const auto& v : ds.covariate_variables_)
      require(seen.insert(v).second, "duplicate variable in config: " + v);
  }

  // Units and their clusters.
  std::map<std::string, std::string> unit_cluster;
  std::set<int> time_set;
  for (const auto& r : rows) {
    auto it = unit_cluster.find(r.unit);
    if (it == unit_cluster.end()) {
      unit_cluster.emplace(r.unit, r.cluster);
    } else {
      require(it->second == r.cluster,
              "unit " + r.unit + " appears in clusters " + it->second + " and " + r.cluster);
    }
    time_set.insert(r.time);
  }
  for (const auto& [unit, cluster] : unit_cluster)
    ds.units_.push_back({unit, cluster});
  std::sort(ds.units_.begin(), ds.units_.end(),
            [](const UnitRecord& a, const UnitRecord& b) { return a.id < b.id; });

  ds.times_.assign(time_set.begin(), time_set.end());
  require(ds.times_.size() >= 3, "panel needs at least 3 periods (2 pre + 1 post)");
  require(ds.times_.back() - ds.times_.front() + 1 == static_cast<int>(ds.times_.size()),
          "unbalanced panel: time axis is not contiguous");

  ds.index_units();
  for (std::size_t i = 0; i < ds.outcome_variables_.size(); ++i)
    ds.variable_index_[ds.outcome_variables_[i]] = i;
  for (std::size_t i = 0; i < ds.covariate_variables_.size(); ++i)
    ds.variable_index_[ds.covariate_variables_[i]] = ds.outcome_variables_.size() + i;

  const std::size_t n_vars = ds.variable_index_.size();
  ds.values_.assign(n_vars, Eigen::MatrixXd::Constant(
                                static_cast<Eigen::Index>(ds.units_.size()),
                                static_cast<Eigen::Index>(ds.times_.size()), kNaN));

  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    auto vit = ds.variable_index_.find(r.variable);
    require(vit != ds.variable_index_.end(),
            "variable " + r.variable + " is not declared as outcome or covariate");
    require(std::isfinite(r.value), "non-finite value for (" + r.unit + ", " + r.variable +
                                        ", " + std::to_string(r.time) + ")");
    const std::size_t ui = ds.unit_idx(r.unit);
    const std::size_t ti = ds.time_idx(r.time);
    double& cell = ds.values_[vit->second](static_cast<Eigen::Index>(ui),
                                           static_cast<Eigen::Index>(ti));
    require(std::isnan(cell), "duplicate key (" + r.unit + ", " + r.variable + ", " +
                                  std::to_string(r.time) + ") at record " + std::to_string(k + 1));
    cell = r.value;
  }

  // Treatment bookkeeping.
  require(ds.has_unit(treated_unit), "treated unit " + treated_unit + " not in panel");
  ds.treated_unit_ = treated_unit;
  ds.treated_cluster_ = ds.cluster_of(treated_unit);
  require(ds.cluster_units(ds.treated_cluster_).size() >= 2,
          "treated cluster " + ds.treated_cluster_ +
              " needs at least 2 units (spillover estimands undefined otherwise)");

  require(std::binary_search(ds.times_.begin(), ds.times_.end(), t0),
          "t0=" + std::to_string(t0) + " is not a panel period");
  ds.t0_ = t0;
  require(ds.n_pre_periods() >= 2, "at least 2 pre-treatment periods required");
  require(ds.n_post_periods() >= 1, "at least 1 post-treatment period required");

  // Completeness: outcomes everywhere, covariates on every pre period and
  // uniformly across units elsewhere.
  for (const auto& v : ds.outcome_variables_) {
    const auto& m = ds.values_[ds.var_idx(v)];
    for (std::size_t u = 0; u < ds.units_.size(); ++u)
      for (std::size_t t = 0; t < ds.times_.size(); ++t)
        require(!std::isnan(m(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(t))),
                "unbalanced panel: missing outcome (" + ds.units_[u].id + ", " + v + ", " +
                    std::to_string(ds.times_[t]) + ")");
  }
  for (const auto& v : ds.covariate_variables_) {
    const auto& m = ds.values_[ds.var_idx(v)];
    for (std::size_t t = 0; t < ds.times_.size(); ++t) {
      std::size_t present = 0;
      for (std::size_t u = 0; u < ds.units_.size(); ++u)
        if (!std::isnan(m(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(t)))) ++present;
      if (ds.times_[t] <= t0) {
        require(present == ds.units_.size(),
                "unbalanced panel: covariate " + v + " incomplete at pre period " +
                    std::to_string(ds.times_[t]));
      } else {
        require(present == 0 || present == ds.units_.size(),
                "unbalanced panel: covariate " + v + " partially observed at period " +
                    std::to_string(ds.times_[t]));
      }
    }
  }

  return ds;
}

PanelDataset PanelDataset::with_treated_unit(const std::string& unit) const {
  require(has_unit(unit), "unknown unit: " + unit);
  PanelDataset copy = *this;
  copy.treated_unit_ = unit;
  copy.treated_cluster_ = cluster_of(unit);
  return copy;
}

void PanelDataset::index_units() {
  unit_index_.clear();
  cluster_members_.clear();
  std::set<std::string> cluster_set;
  for (std::size_t i = 0; i < units_.size(); ++i) {
    require(unit_index_.emplace(units_[i].id, i).second, "duplicate unit id: " + units_[i].id);
    cluster_set.insert(units_[i].cluster);
    cluster_members_[units_[i].cluster].push_back(units_[i].id);
  }
  clusters_.assign(cluster_set.begin(), cluster_set.end());
}

std::size_t PanelDataset::unit_idx(const std::string& unit) const {
  auto it = unit_index_.find(unit);
  require(it != unit_index_.end(), "unknown unit: " + unit);
  return it->second;
}

std::size_t PanelDataset::time_idx(int t) const {
  require(!times_.empty() && t >= times_.front() && t <= times_.back(),
          "period " + std::to_string(t) + " outside panel range");
  return static_cast<std::size_t>(t - times_.front());
}

std::size_t PanelDataset::var_idx(const std::string& variable) const {
  auto it = variable_index_.find(variable);
  require(it != variable_index_.end(), "unknown variable: " + variable);
  return it->second;
}

const std::vector<std::string>& PanelDataset::cluster_units(const std::string& cluster) const {
  auto it = cluster_members_.find(cluster);
  require(it != cluster_members_.end(), "unknown cluster: " + cluster);
  return it->second;
}

const std::string& PanelDataset::cluster_of(const std::string& unit) const {
  return units_[unit_idx(unit)].cluster;
}

bool PanelDataset::has_unit(const std::string& unit) const {
  return unit_index_.count(unit) > 0;
}

std::vector<std::string> PanelDataset::neighbors_of_treated() const {
  std::vector<std::string> out;
  for (const auto& u : cluster_units(treated_cluster_))
    if (u != treated_unit_) out.push_back(u);
  return out;
}

std::vector<int> PanelDataset::pre_times() const {
  std::vector<int> out;
  for (int t : times_)
    if (t <= t0_) out.push_back(t);
  return out;
}

std::vector<int> PanelDataset::post_times() const {
  std::vector<int> out;
  for (int t : times_)
    if (t > t0_) out.push_back(t);
  return out;
}

int PanelDataset::n_pre_periods() const { return static_cast<int>(pre_times().size()); }
int PanelDataset::n_post_periods() const { return static_cast<int>(post_times().size()); }

bool PanelDataset::has_variable(const std::string& variable) const {
  return variable_index_.count(variable) > 0;
}

bool PanelDataset::is_outcome(const std::string& variable) const {
  return std::find(outcome_variables_.begin(), outcome_variables_.end(), variable) !=
         outcome_variables_.end();
}

double PanelDataset::value(const std::string& unit, const std::string& variable, int t) const {
  const double v = values_[var_idx(variable)](static_cast<Eigen::Index>(unit_idx(unit)),
                                              static_cast<Eigen::Index>(time_idx(t)));
  require(!std::isnan(v), "incomplete panel: missing (" + unit + ", " + variable + ", " +
                              std::to_string(t) + ")");
  return v;
}

bool PanelDataset::has_value(const std::string& unit, const std::string& variable, int t) const {
  if (!has_unit(unit) || !has_variable(variable)) return false;
  if (times_.empty() || t < times_.front() || t > times_.back()) return false;
  return !std::isnan(values_[var_idx(variable)](static_cast<Eigen::Index>(unit_idx(unit)),
                                                static_cast<Eigen::Index>(time_idx(t))));
}

std::vector<PanelObservation> PanelDataset::to_rows() const {
  std::vector<PanelObservation> rows;
  std::vector<std::string> vars = outcome_variables_;
  vars.insert(vars.end(), covariate_variables_.begin(), covariate_variables_.end());
  for (const auto& u : units_)
    for (const auto& v : vars)
      for (int t : times_)
        if (has_value(u.id, v, t)) rows.push_back({u.id, u.cluster, t, v, value(u.id, v, t)});
  return rows;
}

bool PanelDataset::operator==(const PanelDataset& other) const {
  if (!(units_.size() == other.units_.size() && times_ == other.times_ && t0_ == other.t0_ &&
        outcome_variables_ == other.outcome_variables_ &&
        covariate_variables_ == other.covariate_variables_ &&
        treated_unit_ == other.treated_unit_ && treated_cluster_ == other.treated_cluster_))
    return false;
  for (std::size_t i = 0; i < units_.size(); ++i)
    if (units_[i].id != other.units_[i].id || units_[i].cluster != other.units_[i].cluster)
      return false;
  for (std::size_t v = 0; v < values_.size(); ++v) {
    const auto& a = values_[v];
    const auto& b = other.values_[v];
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const bool na = std::isnan(a(i, j)), nb = std::isnan(b(i, j));
        if (na != nb) return false;
        if (!na && a(i, j) != b(i, j)) return false;
      }
  }
  return true;
}

double neighborhood_average(const PanelDataset& ds, const std::string& unit,
                            const std::string& variable, int t) {
  const std::string& cluster = ds.cluster_of(unit);
  const auto& members = ds.cluster_units(cluster);
  require(members.size() >= 2, "no neighbors: cluster " + cluster + " is a singleton");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& m : members) {
    if (m == unit) continue;
    sum += ds.value(m, variable, t);
    ++n;
  }
  return sum / static_cast<double>(n);
}

void check_feature_spec(const PanelDataset& ds, const FeatureSpec& spec) {
  require(ds.has_variable(spec.outcome), "unknown outcome variable: " + spec.outcome);
  std::set<std::string> seen{spec.outcome};
  for (const auto& c : spec.covariates) {
    require(ds.has_variable(c), "unknown covariate variable: " + c);
    require(seen.insert(c).second, "variable listed twice in feature spec: " + c);
  }
}

FeatureSpec feature_spec_for_outcome(const PanelDataset& ds, const std::string& outcome) {
  require(ds.is_outcome(outcome), outcome + " is not an outcome variable of the panel");
  FeatureSpec spec;
  spec.outcome = outcome;
  for (const auto& v : ds.outcome_variables())
    if (v != outcome) spec.covariates.push_back(v);
  for (const auto& v : ds.covariate_variables()) spec.covariates.push_back(v);
  return spec;
}

std::shared_ptr<const FeatureLayout> make_feature_layout(const PanelDataset& ds,
                                                         const FeatureSpec& spec,
                                                         FeatureMode mode) {
  check_feature_spec(ds, spec);
  auto layout = std::make_shared<FeatureLayout>();
  const auto pre = ds.pre_times();
  for (int t : pre) layout->push_back({FeatureRole::unit_outcome, spec.outcome, t});
  if (mode == FeatureMode::cross_cluster)
    for (int t : pre) layout->push_back({FeatureRole::neighborhood_outcome, spec.outcome, t});
  for (const auto& c : spec.covariates)
    for (int t : pre) layout->push_back({FeatureRole::unit_covariate, c, t});
  if (mode == FeatureMode::cross_cluster)
    for (const auto& c : spec.covariates)
      for (int t : pre) layout->push_back({FeatureRole::neighborhood_covariate, c, t});
  return layout;
}

namespace {

FeatureVector fill_features(const PanelDataset& ds, const std::string& unit,
                            std::shared_ptr<const FeatureLayout> layout) {
  FeatureVector fv;
  fv.owner = unit;
  fv.layout = layout;
  fv.values.resize(static_cast<Eigen::Index>(layout->size()));
  for (std::size_t i = 0; i < layout->size(); ++i) {
    const auto& lbl = (*layout)[i];
    const bool nbhd = lbl.role == FeatureRole::neighborhood_outcome ||
                      lbl.role == FeatureRole::neighborhood_covariate;
    fv.values(static_cast<Eigen::Index>(i)) =
        nbhd ? neighborhood_average(ds, unit, lbl.variable, lbl.time)
             : ds.value(unit, lbl.variable, lbl.time);
  }
  return fv;
}

}  // namespace

FeatureVector build_feature_vector(const PanelDataset& ds, const FeatureSpec& spec,
                                   const std::string& unit, FeatureMode mode) {
  require(ds.has_unit(unit), "unknown unit: " + unit);
  return fill_features(ds, unit, make_feature_layout(ds, spec, mode));
}

std::vector<FeatureVector> build_feature_vectors(const PanelDataset& ds, const FeatureSpec& spec,
                                                 const std::vector<std::string>& units,
                                                 FeatureMode mode) {
  auto layout = make_feature_layout(ds, spec, mode);
  std::vector<FeatureVector> out;
  out.reserve(units.size());
  for (const auto& u : units) {
    require(ds.has_unit(u), "unknown unit: " + u);
    out.push_back(fill_features(ds, u, layout));
  }
  return out;
}

OutcomeRole observed_outcome_role(const PanelDataset& ds, const std::string& unit, int t) {
  require(ds.has_unit(unit), "unknown unit: " + unit);
  require(t >= ds.times().front() && t <= ds.times().back(),
          "period " + std::to_string(t) + " outside panel range");
  if (t <= ds.t0()) return {0, TreatmentAllocation::all_zero()};
  if (unit == ds.treated_unit()) return {1, TreatmentAllocation::all_zero()};
  if (ds.cluster_of(unit) == ds.treated_cluster())
    return {0, TreatmentAllocation::actual(ds.treated_unit())};
  return {0, TreatmentAllocation::all_zero()};
}

}  // namespace pscg
