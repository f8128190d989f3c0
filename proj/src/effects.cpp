#include "pscg/effects.hpp"

#include <algorithm>
#include <cmath>

namespace pscg {

std::string estimand_name(Estimand e) {
  switch (e) {
    case Estimand::direct: return "direct";
    case Estimand::spillover_individual: return "spillover_individual";
    case Estimand::spillover_average: return "spillover_average";
    case Estimand::unrealized: return "unrealized";
    case Estimand::net_contrast: return "net_contrast";
  }
  return "?";
}

CounterfactualSeries impute_control_outcome(const PanelDataset& ds, const std::string& variable,
                                            const std::string& unit, const WeightVector& weights,
                                            const std::vector<std::string>& donors,
                                            const TreatmentAllocation& allocation) {
  require(ds.has_variable(variable), "unknown variable: " + variable);
  require(!donors.empty(), "empty donor list");
  require(weights.weights.size() == static_cast<Eigen::Index>(donors.size()),
          "weights are misaligned with the donor list");
  require(ds.cluster_of(unit) == ds.treated_cluster(),
          "imputation target " + unit + " is outside the treated cluster");
  if (allocation.kind() == TreatmentAllocation::Kind::all_zero) {
    for (const auto& d : donors)
      require(ds.cluster_of(d) != ds.treated_cluster(),
              "all-zero imputation requires out-of-cluster donors; got " + d);
  } else if (allocation.kind() == TreatmentAllocation::Kind::counterfactual) {
    require(unit == ds.treated_unit(), "counterfactual imputation targets the treated unit");
    for (const auto& d : donors)
      require(ds.cluster_of(d) == ds.treated_cluster() && d != ds.treated_unit(),
              "counterfactual imputation uses the treated unit's neighbors; got " + d);
  } else {
    fail("imputations are labeled all_zero or counterfactual");
  }

  CounterfactualSeries cf;
  cf.unit = unit;
  cf.variable = variable;
  cf.allocation = allocation;
  cf.post_times = ds.post_times();
  cf.pre_times = ds.pre_times();
  cf.weights_used = weights;
  cf.donors_used = donors;

  auto weighted = [&](int t) {
    double v = 0.0;
    for (std::size_t j = 0; j < donors.size(); ++j)
      v += weights.weights(static_cast<Eigen::Index>(j)) * ds.value(donors[j], variable, t);
    return v;
  };
  for (int t : cf.post_times) cf.values.push_back(weighted(t));
  double ss = 0.0;
  for (int t : cf.pre_times) {
    const double fitted = weighted(t);
    cf.pre_fitted.push_back(fitted);
    const double r = ds.value(unit, variable, t) - fitted;
    ss += r * r;
  }
  cf.pre_period_rmspe = std::sqrt(ss / static_cast<double>(cf.pre_times.size()));
  return cf;
}

EffectSeries direct_effect(const PanelDataset& ds, const CounterfactualSeries& cf) {
  require(cf.unit == ds.treated_unit(), "direct effect needs the treated unit's imputation");
  require(cf.allocation.kind() == TreatmentAllocation::Kind::all_zero,
          "direct effect needs the all-zero (0, z) imputation");
  EffectSeries e;
  e.estimand = Estimand::direct;
  e.variable = cf.variable;
  e.unit = cf.unit;
  e.periods = cf.post_times;
  e.pre_period_rmspe = cf.pre_period_rmspe;
  for (std::size_t i = 0; i < cf.post_times.size(); ++i) {
    const double obs = ds.value(cf.unit, cf.variable, cf.post_times[i]);
    e.observed.push_back(obs);
    e.imputed.push_back(cf.values[i]);
    e.values.push_back(obs - cf.values[i]);
  }
  return e;
}

std::pair<std::map<std::string, EffectSeries>, EffectSeries> spillover_effects(
    const PanelDataset& ds, const std::map<std::string, CounterfactualSeries>& cfs) {
  const auto neighbors = ds.neighbors_of_treated();
  require(!neighbors.empty(), "treated cluster has no neighbors");
  for (const auto& n : neighbors)
    require(cfs.count(n) == 1, "missing counterfactual for neighbor " + n);

  std::map<std::string, EffectSeries> individual;
  const std::string& variable = cfs.begin()->second.variable;
  const auto post = ds.post_times();

  for (const auto& n : neighbors) {
    const auto& cf = cfs.at(n);
    require(cf.unit == n && cf.allocation.kind() == TreatmentAllocation::Kind::all_zero,
            "neighbor counterfactual mislabeled for " + n);
    EffectSeries e;
    e.estimand = Estimand::spillover_individual;
    e.variable = cf.variable;
    e.unit = n;
    e.periods = post;
    e.pre_period_rmspe = cf.pre_period_rmspe;
    for (std::size_t i = 0; i < post.size(); ++i) {
      const double obs = ds.value(n, cf.variable, post[i]);
      e.observed.push_back(obs);
      e.imputed.push_back(cf.values[i]);
      e.values.push_back(obs - cf.values[i]);
    }
    individual.emplace(n, std::move(e));
  }

  EffectSeries avg;
  avg.estimand = Estimand::spillover_average;
  avg.variable = variable;
  avg.periods = post;
  const double n_count = static_cast<double>(neighbors.size());
  for (std::size_t i = 0; i < post.size(); ++i) {
    double sum = 0.0;
    for (const auto& n : neighbors) sum += individual.at(n).values[i];
    avg.values.push_back(sum / n_count);
  }
  // Pooled pre-period fit quality across the neighbors' syntheses.
  double ss = 0.0;
  std::size_t cnt = 0;
  for (const auto& n : neighbors) {
    const auto& cf = cfs.at(n);
    for (std::size_t i = 0; i < cf.pre_times.size(); ++i) {
      const double r = ds.value(n, cf.variable, cf.pre_times[i]) - cf.pre_fitted[i];
      ss += r * r;
      ++cnt;
    }
  }
  avg.pre_period_rmspe = std::sqrt(ss / static_cast<double>(cnt));
  return {std::move(individual), std::move(avg)};
}

EffectSeries unrealized_spillover(const PanelDataset& ds, const CounterfactualSeries& star_cf,
                                  const CounterfactualSeries& zero_cf) {
  require(star_cf.allocation.kind() == TreatmentAllocation::Kind::counterfactual,
          "star imputation must carry the counterfactual allocation");
  require(zero_cf.unit == ds.treated_unit() &&
              zero_cf.allocation.kind() == TreatmentAllocation::Kind::all_zero,
          "needs the treated unit's all-zero imputation");
  require(star_cf.variable == zero_cf.variable, "imputations disagree on the variable");
  require(star_cf.post_times == zero_cf.post_times, "imputations disagree on the period range");

  EffectSeries e;
  e.estimand = Estimand::unrealized;
  e.variable = star_cf.variable;
  e.unit = ds.treated_unit();
  e.periods = star_cf.post_times;
  e.pre_period_rmspe = star_cf.pre_period_rmspe;
  e.note = "assumes the spillover on the treated unit is constant across its neighbors";
  for (std::size_t i = 0; i < e.periods.size(); ++i) {
    e.observed.push_back(star_cf.values[i]);
    e.imputed.push_back(zero_cf.values[i]);
    e.values.push_back(star_cf.values[i] - zero_cf.values[i]);
  }
  return e;
}

EffectSeries net_contrast(const EffectSeries& direct, const EffectSeries& unrealized) {
  require(direct.estimand == Estimand::direct && unrealized.estimand == Estimand::unrealized,
          "net contrast is direct minus unrealized");
  require(direct.periods == unrealized.periods, "effect series period ranges differ");
  require(direct.variable == unrealized.variable, "effect series variables differ");
  EffectSeries e;
  e.estimand = Estimand::net_contrast;
  e.variable = direct.variable;
  e.unit = direct.unit;
  e.periods = direct.periods;
  e.note = "positive: the realized allocation was a gain for the treated unit";
  for (std::size_t i = 0; i < e.periods.size(); ++i) {
    e.observed.push_back(direct.values[i]);
    e.imputed.push_back(unrealized.values[i]);
    e.values.push_back(direct.values[i] - unrealized.values[i]);
  }
  return e;
}

BalanceTable balance_table(const PanelDataset& ds,
                           const std::map<std::string, CounterfactualSeries>& zero_cfs,
                           const std::optional<CounterfactualSeries>& star_cf) {
  require(!zero_cfs.empty(), "no counterfactuals supplied");
  BalanceTable table;
  table.variable = zero_cfs.begin()->second.variable;
  table.pre_times = ds.pre_times();

  std::vector<std::string> targets{ds.treated_unit()};
  for (const auto& n : ds.neighbors_of_treated()) targets.push_back(n);

  table.columns = targets;
  table.columns.push_back(ds.treated_unit() + " (within-cluster)");

  const std::size_t n_cols = table.columns.size();
  table.entries.assign(2, std::vector<std::vector<std::optional<double>>>(
                              table.pre_times.size(),
                              std::vector<std::optional<double>>(n_cols)));

  auto weighted = [&](const CounterfactualSeries& cf, int t, bool neighborhood) {
    double v = 0.0;
    for (std::size_t j = 0; j < cf.donors_used.size(); ++j) {
      const double x = neighborhood
                           ? neighborhood_average(ds, cf.donors_used[j], cf.variable, t)
                           : ds.value(cf.donors_used[j], cf.variable, t);
      v += cf.weights_used.weights(static_cast<Eigen::Index>(j)) * x;
    }
    return v;
  };

  for (std::size_t c = 0; c < targets.size(); ++c) {
    const auto it = zero_cfs.find(targets[c]);
    if (it == zero_cfs.end()) continue;
    const auto& cf = it->second;
    for (std::size_t ti = 0; ti < table.pre_times.size(); ++ti) {
      const int t = table.pre_times[ti];
      table.entries[0][ti][c] = ds.value(targets[c], cf.variable, t) - weighted(cf, t, false);
      table.entries[1][ti][c] =
          neighborhood_average(ds, targets[c], cf.variable, t) - weighted(cf, t, true);
    }
  }
  if (star_cf) {
    const std::size_t c = n_cols - 1;
    for (std::size_t ti = 0; ti < table.pre_times.size(); ++ti) {
      const int t = table.pre_times[ti];
      table.entries[0][ti][c] =
          ds.value(ds.treated_unit(), star_cf->variable, t) - weighted(*star_cf, t, false);
      table.entries[1][ti][c] = neighborhood_average(ds, ds.treated_unit(), star_cf->variable, t) -
                                weighted(*star_cf, t, true);
    }
  }
  return table;
}

}  // namespace pscg
