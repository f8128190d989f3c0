#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pscg/estimator.hpp"
#include "pscg/io.hpp"
#include "pscg/matching.hpp"
#include "pscg/penalty_cv.hpp"
#include "pscg/pipeline.hpp"
#include "pscg/placebo.hpp"
#include "pscg/simulate.hpp"
#include "pscg/solver.hpp"
#include "pscg/version.hpp"

namespace py = pybind11;
using namespace pscg;

namespace {

// Raw solver entry points take donors as rows (n_donors x dim).
PreparedProblem prepare(const Eigen::MatrixXd& donor_rows, const Eigen::VectorXd& target) {
  return PreparedProblem(donor_rows.transpose(), target);
}

py::dict weights_to_dict(const WeightVector& w) {
  py::dict d;
  d["weights"] = w.weights;
  d["objective"] = w.objective_value;
  d["fit"] = w.fit_term;
  d["penalty"] = w.penalty_term;
  d["unique_within_tol"] = w.unique_within_tol;
  return d;
}

py::dict effect_to_dict(const EffectSeries& e) {
  py::dict d;
  d["estimand"] = estimand_name(e.estimand);
  d["unit"] = e.unit;
  d["periods"] = e.periods;
  d["values"] = e.values;
  d["observed"] = e.observed;
  d["imputed"] = e.imputed;
  d["pre_period_rmspe"] = e.pre_period_rmspe;
  if (!e.note.empty()) d["note"] = e.note;
  return d;
}

py::dict estimation_to_dict(const EstimationResult& r) {
  py::dict d;
  d["variable"] = r.outcome_variable;
  d["post_times"] = r.post_times;
  d["direct"] = effect_to_dict(r.direct);
  py::dict individual;
  for (const auto& [unit, e] : r.spillover_individual)
    individual[py::str(unit)] = effect_to_dict(e);
  d["spillover_individual"] = individual;
  if (r.spillover_average) d["spillover_average"] = effect_to_dict(*r.spillover_average);
  if (r.unrealized) d["unrealized"] = effect_to_dict(*r.unrealized);
  if (r.net) d["net_contrast"] = effect_to_dict(*r.net);
  d["donor_pool"] = r.donor_pool;
  py::dict weights;
  for (const auto& [unit, cf] : r.zero_imputations) {
    py::dict w;
    for (std::size_t j = 0; j < cf.donors_used.size(); ++j)
      w[py::str(cf.donors_used[j])] = cf.weights_used.weights(static_cast<Eigen::Index>(j));
    weights[py::str(unit)] = w;
  }
  d["weights"] = weights;
  py::dict rmspe;
  for (const auto& [unit, cf] : r.zero_imputations)
    rmspe[py::str(unit)] = cf.pre_period_rmspe;
  d["pre_period_rmspe"] = rmspe;
  d["warnings"] = r.warnings;
  return d;
}

PenaltyConfig penalties_from(double lambda_treated, double lambda_neighbors, double lambda_star) {
  PenaltyConfig p;
  p.lambda_treated = lambda_treated;
  p.lambda_neighbors = lambda_neighbors;
  p.lambda_star = lambda_star;
  p.grid_description = "fixed";
  return p;
}

FeatureSpec spec_or_default(const PanelDataset& ds, const std::string& outcome,
                            const std::optional<std::vector<std::string>>& covariates) {
  if (!covariates) return feature_spec_for_outcome(ds, outcome);
  FeatureSpec spec{outcome, *covariates};
  check_feature_spec(ds, spec);
  return spec;
}

py::dict summary_to_dict(const PlaceboSummary& s) {
  py::dict d;
  d["estimand"] = estimand_name(s.estimand);
  d["periods"] = s.periods;
  d["actual"] = s.actual;
  d["placebo_units"] = s.placebo_units;
  d["placebo_values"] = s.placebo_values;
  d["rank"] = s.rank;
  d["p_value"] = s.p_value;
  d["aggregate_statistic"] = s.aggregate_statistic;
  d["aggregate_p"] = s.aggregate_p;
  d["n_placebos"] = s.included_count;
  return d;
}

}  // namespace

PYBIND11_MODULE(_pscg, m) {
  m.doc() = "Penalized synthetic controls with spillovers for clustered panel data";
  m.attr("__version__") = std::string(version_string());

  py::register_exception<Error>(m, "PscgError", PyExc_ValueError);

  py::class_<PanelDataset>(m, "Panel")
      .def_static(
          "load",
          [](const std::string& path, std::vector<std::string> outcomes,
             std::vector<std::string> covariates, const std::string& treated_unit, int t0) {
            return ingest_panel(path, std::move(outcomes), std::move(covariates), treated_unit, t0)
                .dataset;
          },
          py::arg("path"), py::arg("outcomes"), py::arg("covariates"), py::arg("treated_unit"),
          py::arg("t0"), "Parse and validate a long-format panel CSV")
      .def_static(
          "from_rows",
          [](const std::vector<std::tuple<std::string, std::string, int, std::string, double>>&
                 rows,
             std::vector<std::string> outcomes, std::vector<std::string> covariates,
             const std::string& treated_unit, int t0) {
            std::vector<PanelObservation> obs;
            obs.reserve(rows.size());
            for (const auto& [unit, cluster, time, variable, value] : rows)
              obs.push_back({unit, cluster, time, variable, value});
            return PanelDataset::create(obs, std::move(outcomes), std::move(covariates),
                                        treated_unit, t0);
          },
          py::arg("rows"), py::arg("outcomes"), py::arg("covariates"), py::arg("treated_unit"),
          py::arg("t0"), "Build a panel from (unit, cluster, time, variable, value) tuples")
      .def_property_readonly("units",
                             [](const PanelDataset& ds) {
                               std::vector<std::string> out;
                               for (const auto& u : ds.units()) out.push_back(u.id);
                               return out;
                             })
      .def_property_readonly("clusters", &PanelDataset::clusters)
      .def_property_readonly("times", &PanelDataset::times)
      .def_property_readonly("t0", &PanelDataset::t0)
      .def_property_readonly("treated_unit", &PanelDataset::treated_unit)
      .def_property_readonly("treated_cluster", &PanelDataset::treated_cluster)
      .def_property_readonly("outcome_variables", &PanelDataset::outcome_variables)
      .def_property_readonly("covariate_variables", &PanelDataset::covariate_variables)
      .def("cluster_of", &PanelDataset::cluster_of, py::arg("unit"))
      .def("cluster_units", &PanelDataset::cluster_units, py::arg("cluster"))
      .def("neighbors_of_treated", &PanelDataset::neighbors_of_treated)
      .def("value", &PanelDataset::value, py::arg("unit"), py::arg("variable"), py::arg("time"))
      .def("neighborhood_average",
           [](const PanelDataset& ds, const std::string& unit, const std::string& variable,
              int t) { return neighborhood_average(ds, unit, variable, t); },
           py::arg("unit"), py::arg("variable"), py::arg("time"),
           "Leave-one-out cluster mean of a variable at one period")
      .def("with_treated_unit", &PanelDataset::with_treated_unit, py::arg("unit"),
           "Re-root the panel at another unit (placebo machinery)")
      .def("to_csv", [](const PanelDataset& ds, const std::string& path) { emit_panel(ds, path); },
           py::arg("path"))
      .def("__eq__", [](const PanelDataset& a, const PanelDataset& b) { return a == b; })
      .def("__len__", &PanelDataset::n_units);

  m.def(
      "solve_penalized_sc",
      [](const Eigen::VectorXd& target, const Eigen::MatrixXd& donors, double lam) {
        return weights_to_dict(prepare(donors, target).solve(lam));
      },
      py::arg("target"), py::arg("donors"), py::arg("lam"),
      "Penalized synthetic-control weights; donors as rows of a (n, dim) array");
  m.def(
      "solve_unpenalized_sc",
      [](const Eigen::VectorXd& target, const Eigen::MatrixXd& donors) {
        return weights_to_dict(prepare(donors, target).solve(0.0));
      },
      py::arg("target"), py::arg("donors"));
  m.def(
      "grid_oracle",
      [](const Eigen::VectorXd& target, const Eigen::MatrixXd& donors, double lam,
         double resolution) {
        return weights_to_dict(grid_oracle_raw(donors.transpose(), target, lam, resolution));
      },
      py::arg("target"), py::arg("donors"), py::arg("lam"), py::arg("resolution"),
      "Exhaustive lattice search over the simplex (at most 4 donors)");
  m.def("mahalanobis_distance", &mahalanobis_distance, py::arg("x"), py::arg("y"),
        py::arg("sigma_inv"));
  m.def("default_lambda_grid", []() { return default_grid().values; },
        "The canonical 10000-point penalty grid on (0, 1]");

  m.def(
      "build_match_sets",
      [](const PanelDataset& ds, const std::string& outcome, int match_count,
         const std::optional<std::vector<std::string>>& covariates) {
        const MatchResult r = build_match_sets(ds, spec_or_default(ds, outcome, covariates),
                                               match_count);
        py::dict d;
        py::dict anchors;
        for (const auto& [anchor, ms] : r.by_anchor) anchors[py::str(anchor)] = ms.matched;
        d["by_anchor"] = anchors;
        d["h_treated"] = r.h_treated;
        d["h_union"] = r.h_union;
        return d;
      },
      py::arg("panel"), py::arg("outcome"), py::arg("match_count") = 5,
      py::arg("covariates") = py::none(),
      "Mahalanobis nearest-neighbor matched donor sets per treated-cluster unit");

  m.def(
      "select_penalties",
      [](const PanelDataset& ds, const std::string& outcome, int match_count, int grid_size,
         bool log_grid, bool standardize) {
        RunConfig config;
        config.outcome_variables = ds.outcome_variables();
        config.covariate_variables = ds.covariate_variables();
        config.treated_unit = ds.treated_unit();
        config.t0 = ds.t0();
        config.match_count = match_count;
        config.grid_size = grid_size;
        config.log_grid = log_grid;
        config.standardize_features = standardize;
        const VariableRunResult r = analyze_variable(ds, config, outcome,
                                                     AnalysisStage::penalties);
        py::dict d;
        d["lambda_treated"] = r.penalties.lambda_treated;
        d["lambda_neighbors"] = r.penalties.lambda_neighbors;
        d["lambda_star"] = r.penalties.lambda_star;
        d["grid_size"] = r.penalties.grid_size;
        py::dict curves;
        for (const auto& rep : r.cv_reports) {
          py::list curve;
          for (const auto& pt : rep.curve) curve.append(py::make_tuple(pt.lambda, pt.rmspe));
          curves[py::str(rep.criterion)] = curve;
        }
        d["curves"] = curves;
        d["warnings"] = r.warnings;
        return d;
      },
      py::arg("panel"), py::arg("outcome"), py::arg("match_count") = 5,
      py::arg("grid_size") = 10000, py::arg("log_grid") = false, py::arg("standardize") = false,
      "Cross-validated penalty terms (lambda_treated, lambda_neighbors, lambda_star)");

  m.def(
      "estimate_effects",
      [](const PanelDataset& ds, const std::string& outcome, double lambda_treated,
         double lambda_neighbors, double lambda_star, bool standardize) {
        EstimationOptions opts;
        opts.standardize_features = standardize;
        const EstimationResult r = estimate_effects(
            ds, feature_spec_for_outcome(ds, outcome),
            penalties_from(lambda_treated, lambda_neighbors, lambda_star), opts);
        return estimation_to_dict(r);
      },
      py::arg("panel"), py::arg("outcome"), py::arg("lambda_treated"),
      py::arg("lambda_neighbors"), py::arg("lambda_star"), py::arg("standardize") = false,
      "Direct, spillover, unrealized-spillover and net-contrast series");

  m.def(
      "run_placebos",
      [](const PanelDataset& ds, const std::string& outcome, double lambda_treated,
         double lambda_neighbors, double lambda_star, double rmspe_threshold,
         bool include_true_cluster, bool standardize) {
        const FeatureSpec spec = feature_spec_for_outcome(ds, outcome);
        const PenaltyConfig penalties =
            penalties_from(lambda_treated, lambda_neighbors, lambda_star);
        PlaceboOptions opts;
        opts.exclude_true_treated_cluster = !include_true_cluster;
        opts.estimation.standardize_features = standardize;
        const auto runs =
            filter_by_rmspe(run_placebos(ds, spec, penalties, opts), rmspe_threshold);

        EstimationOptions eopts;
        eopts.standardize_features = standardize;
        const EstimationResult actual = estimate_effects(ds, spec, penalties, eopts);

        py::list run_list;
        for (const auto& run : runs) {
          py::dict rd;
          rd["pseudo_unit"] = run.pseudo_unit;
          rd["pseudo_cluster"] = run.pseudo_cluster;
          rd["excluded"] = run.excluded;
          rd["exclusion_reason"] = run.exclusion_reason;
          py::dict effects;
          for (const auto& [estimand, series] : run.effects)
            effects[py::str(estimand_name(estimand))] = effect_to_dict(series);
          rd["effects"] = effects;
          const auto it = run.pre_period_rmspe.find(Estimand::direct);
          if (it != run.pre_period_rmspe.end()) rd["rmspe"] = it->second;
          run_list.append(rd);
        }

        py::dict summaries;
        auto add_summary = [&](const EffectSeries& series) {
          try {
            summaries[py::str(estimand_name(series.estimand))] =
                summary_to_dict(summarize(series, runs));
          } catch (const Error&) {
            // no included placebo run carries the estimand
          }
        };
        add_summary(actual.direct);
        if (actual.spillover_average) add_summary(*actual.spillover_average);
        if (actual.unrealized) add_summary(*actual.unrealized);
        if (actual.net) add_summary(*actual.net);

        py::dict d;
        d["runs"] = run_list;
        d["summaries"] = summaries;
        d["actual"] = estimation_to_dict(actual);
        return d;
      },
      py::arg("panel"), py::arg("outcome"), py::arg("lambda_treated"),
      py::arg("lambda_neighbors"), py::arg("lambda_star"), py::arg("rmspe_threshold") = 1.0,
      py::arg("include_true_cluster") = false, py::arg("standardize") = false,
      "In-space placebo runs, the RMSPE filter and rank-based p-values");

  m.def(
      "simulate_panel",
      [](std::vector<int> cluster_sizes, int n_pre, int n_post, int n_outcomes, int n_covariates,
         int n_factors, double noise_sd, bool planted_weights, std::vector<double> tau,
         std::vector<double> delta, std::vector<double> gamma, std::uint64_t seed) {
        SimSpec spec;
        if (!cluster_sizes.empty()) spec.cluster_sizes = std::move(cluster_sizes);
        spec.n_pre = n_pre;
        spec.n_post = n_post;
        spec.n_outcomes = n_outcomes;
        spec.n_covariates = n_covariates;
        spec.n_factors = n_factors;
        spec.noise_sd = noise_sd;
        spec.planted_weights = planted_weights;
        spec.tau = std::move(tau);
        spec.delta = std::move(delta);
        spec.gamma = std::move(gamma);
        auto [ds, truth] = generate_synthetic_panel(spec, seed);
        py::dict t;
        t["post_times"] = truth.post_times;
        t["tau"] = truth.tau;
        t["delta"] = truth.delta;
        t["gamma"] = truth.gamma;
        return py::make_tuple(std::move(ds), t);
      },
      py::arg("cluster_sizes") = std::vector<int>{}, py::arg("n_pre") = 2, py::arg("n_post") = 8,
      py::arg("n_outcomes") = 2, py::arg("n_covariates") = 0, py::arg("n_factors") = 1,
      py::arg("noise_sd") = 0.02, py::arg("planted_weights") = true,
      py::arg("tau") = std::vector<double>{}, py::arg("delta") = std::vector<double>{},
      py::arg("gamma") = std::vector<double>{}, py::arg("seed") = 0,
      "Factor-model panel with injected effects; returns (Panel, truth)");

  m.def(
      "run_pipeline_json",
      [](const std::string& config_json) {
        const PipelineOutputs out = run_pipeline(run_config_from_json_text(config_json));
        return out.files;
      },
      py::arg("config_json"), "Full batch pipeline from a JSON config string; returns the files");
}
