#include "pscg/placebo.hpp"

#include <algorithm>
#include <cmath>

namespace pscg {

std::vector<PlaceboRun> run_placebos(const PanelDataset& ds, const FeatureSpec& spec,
                                     const PenaltyConfig& penalties, const PlaceboOptions& opts) {
  std::vector<std::string> controls;
  for (const auto& u : ds.units())
    if (u.cluster != ds.treated_cluster()) controls.push_back(u.id);
  require(!controls.empty(), "no eligible control units for placebo studies");

  EstimationOptions est_opts = opts.estimation;
  if (opts.exclude_true_treated_cluster) {
    auto& excl = est_opts.excluded_donor_clusters;
    if (std::find(excl.begin(), excl.end(), ds.treated_cluster()) == excl.end())
      excl.push_back(ds.treated_cluster());
  }

  std::vector<PlaceboRun> runs;
  runs.reserve(controls.size());
  for (const auto& unit : controls) {
    PlaceboRun run;
    run.pseudo_unit = unit;
    run.pseudo_cluster = ds.cluster_of(unit);
    run.penalties = penalties;
    try {
      const PanelDataset pseudo = ds.with_treated_unit(unit);
      const EstimationResult r = estimate_effects(pseudo, spec, penalties, est_opts);
      run.effects.emplace(Estimand::direct, r.direct);
      run.pre_period_rmspe[Estimand::direct] =
          r.zero_imputations.at(unit).pre_period_rmspe;
      if (r.spillover_average) {
        run.effects.emplace(Estimand::spillover_average, *r.spillover_average);
        run.pre_period_rmspe[Estimand::spillover_average] = r.spillover_average->pre_period_rmspe;
      }
      if (r.unrealized) {
        run.effects.emplace(Estimand::unrealized, *r.unrealized);
        run.pre_period_rmspe[Estimand::unrealized] = r.unrealized->pre_period_rmspe;
      }
      if (r.net) run.effects.emplace(Estimand::net_contrast, *r.net);
      run.notes = r.warnings;
    } catch (const Error& e) {
      run.excluded = true;
      run.exclusion_reason = e.what();
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<PlaceboRun> filter_by_rmspe(std::vector<PlaceboRun> runs, double threshold) {
  require(threshold > 0.0, "rmspe threshold must be > 0");
  for (auto& run : runs) {
    if (run.excluded) continue;
    const auto it = run.pre_period_rmspe.find(Estimand::direct);
    if (it != run.pre_period_rmspe.end() && it->second > threshold) {
      run.excluded = true;
      run.exclusion_reason = "rmspe";
    }
  }
  return runs;
}

PlaceboSummary summarize(const EffectSeries& actual, const std::vector<PlaceboRun>& runs) {
  PlaceboSummary s;
  s.estimand = actual.estimand;
  s.variable = actual.variable;
  s.periods = actual.periods;
  s.actual = actual.values;

  std::vector<const PlaceboRun*> included;
  for (const auto& run : runs) {
    if (run.excluded) continue;
    const auto it = run.effects.find(actual.estimand);
    if (it == run.effects.end()) continue;
    if (it->second.variable != actual.variable) continue;
    require(it->second.periods == actual.periods, "placebo run " + run.pseudo_unit +
                                                      " has a mismatched period range");
    included.push_back(&run);
  }
  require(!included.empty(), "no placebo distribution: every run is excluded or lacks the estimand");
  std::sort(included.begin(), included.end(),
            [](const PlaceboRun* a, const PlaceboRun* b) { return a->pseudo_unit < b->pseudo_unit; });

  s.included_count = static_cast<int>(included.size());
  const int denom = s.included_count + 1;
  for (const auto* run : included) s.placebo_units.push_back(run->pseudo_unit);

  s.placebo_values.assign(s.periods.size(), {});
  for (std::size_t i = 0; i < s.periods.size(); ++i) {
    auto& vals = s.placebo_values[i];
    vals.reserve(included.size());
    int geq = 1;  // the actual value itself
    for (const auto* run : included) {
      const double v = run->effects.at(actual.estimand).values[i];
      vals.push_back(v);
      if (std::abs(v) >= std::abs(s.actual[i])) ++geq;
    }
    s.rank.push_back(geq);
    s.p_value.push_back(static_cast<double>(geq) / denom);
  }

  auto mean_abs = [](const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += std::abs(x);
    return sum / static_cast<double>(v.size());
  };
  s.aggregate_statistic = mean_abs(s.actual);
  int geq = 1;
  for (const auto* run : included) {
    std::vector<double> v = run->effects.at(actual.estimand).values;
    if (mean_abs(v) >= s.aggregate_statistic) ++geq;
  }
  s.aggregate_p = static_cast<double>(geq) / denom;
  return s;
}

}  // namespace pscg
