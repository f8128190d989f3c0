#include "pscg/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "pscg/version.hpp"

namespace pscg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

RunConfig run_config_from_json(const json& j, const std::string& where) {
  RunConfig c;
  try {
    c.input_path = j.value("input", "");
    c.outcome_variables = j.value("outcomes", std::vector<std::string>{});
    c.covariate_variables = j.value("covariates", std::vector<std::string>{});
    c.treated_unit = j.value("treated_unit", "");
    c.t0 = j.value("t0", 0);
    c.match_count = j.value("match_count", 5);
    c.grid_size = j.value("grid_size", 10000);
    c.log_grid = j.value("log_grid", false);
    if (j.contains("fixed_penalties")) {
      const auto& p = j.at("fixed_penalties");
      PenaltyConfig pc;
      pc.lambda_treated = p.at("lambda_treated").get<double>();
      pc.lambda_neighbors = p.at("lambda_neighbors").get<double>();
      pc.lambda_star = p.at("lambda_star").get<double>();
      pc.grid_description = "fixed by config";
      c.fixed_penalties = pc;
    }
    c.rmspe_threshold = j.value("rmspe_threshold", 1.0);
    c.standardize_features = j.value("standardize", false);
    c.placebo_include_true_cluster = j.value("placebo_include_true_cluster", false);
    c.output_dir = j.value("output_dir", "");
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    fail("bad config field in " + where + ": " + e.what());
  }
  return c;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("bad config JSON in " + path + ": " + e.what());
  }
  return run_config_from_json(j, path);
}

RunConfig run_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("bad config JSON: ") + e.what());
  }
  return run_config_from_json(j, "config");
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["input"] = c.input_path;
  j["outcomes"] = c.outcome_variables;
  j["covariates"] = c.covariate_variables;
  j["treated_unit"] = c.treated_unit;
  j["t0"] = c.t0;
  j["match_count"] = c.match_count;
  j["grid_size"] = c.grid_size;
  j["log_grid"] = c.log_grid;
  if (c.fixed_penalties) {
    j["fixed_penalties"] = {{"lambda_treated", c.fixed_penalties->lambda_treated},
                            {"lambda_neighbors", c.fixed_penalties->lambda_neighbors},
                            {"lambda_star", c.fixed_penalties->lambda_star}};
  }
  j["rmspe_threshold"] = c.rmspe_threshold;
  j["standardize"] = c.standardize_features;
  j["placebo_include_true_cluster"] = c.placebo_include_true_cluster;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  return j.dump(2);
}

FeatureSpec feature_spec_for(const RunConfig& config, const std::string& outcome) {
  FeatureSpec spec;
  spec.outcome = outcome;
  for (const auto& v : config.outcome_variables)
    if (v != outcome) spec.covariates.push_back(v);
  for (const auto& v : config.covariate_variables) spec.covariates.push_back(v);
  return spec;
}

std::vector<std::string> reporting_order(const PanelDataset& ds) {
  std::vector<std::string> order{ds.treated_unit()};
  for (const auto& n : ds.neighbors_of_treated()) order.push_back(n);
  for (const auto& cluster : ds.clusters()) {
    if (cluster == ds.treated_cluster()) continue;
    for (const auto& u : ds.cluster_units(cluster)) order.push_back(u);
  }
  return order;
}

RmspeTable build_rmspe_table(const PanelDataset& ds, const FeatureSpec& spec,
                             const PenaltyConfig& penalties, const EstimationOptions& opts,
                             bool placebo_exclude_true_cluster) {
  RmspeTable table;
  table.variable = spec.outcome;
  table.context_names = {"treated", "neighbors", "within_cluster"};
  table.units = reporting_order(ds);

  SolverOptions solver = opts.solver;
  solver.check_uniqueness = false;

  for (const auto& unit : table.units) {
    std::vector<std::optional<double>> row(RmspeTable::n_contexts);
    const bool in_treated_cluster = ds.cluster_of(unit) == ds.treated_cluster();
    const PanelDataset view = in_treated_cluster ? ds : ds.with_treated_unit(unit);

    std::vector<std::string> excluded = opts.excluded_donor_clusters;
    if (!in_treated_cluster && placebo_exclude_true_cluster)
      excluded.push_back(ds.treated_cluster());

    const bool singleton = view.cluster_units(view.treated_cluster()).size() < 2;
    const FeatureMode mode = singleton ? FeatureMode::within_cluster : FeatureMode::cross_cluster;
    const auto pool = cross_cluster_donor_pool(view, excluded, singleton);
    if (!pool.empty()) {
      std::vector<std::string> everyone{unit};
      everyone.insert(everyone.end(), pool.begin(), pool.end());
      std::vector<FeatureVector> feats = build_feature_vectors(view, spec, everyone, mode);
      if (opts.standardize_features) feats = standardize_dimensions(feats);
      Eigen::MatrixXd donors(feats.front().values.size(),
                             static_cast<Eigen::Index>(pool.size()));
      for (std::size_t j = 0; j < pool.size(); ++j)
        donors.col(static_cast<Eigen::Index>(j)) = feats[j + 1].values;
      PreparedProblem prep(std::move(donors), feats.front().values);

      auto pre_rmspe = [&](double lambda) {
        const WeightVector w = prep.solve(lambda, solver);
        double ss = 0.0;
        for (int t : view.pre_times()) {
          double fitted = 0.0;
          for (std::size_t j = 0; j < pool.size(); ++j)
            fitted += w.weights(static_cast<Eigen::Index>(j)) * view.value(pool[j], spec.outcome, t);
          const double r = view.value(unit, spec.outcome, t) - fitted;
          ss += r * r;
        }
        return std::sqrt(ss / static_cast<double>(view.pre_times().size()));
      };
      row[0] = pre_rmspe(penalties.lambda_treated);
      row[1] = pre_rmspe(penalties.lambda_neighbors);
    }

    // Within-cluster context: synthesize the unit from its untreated cluster
    // mates, matching the lambda* fits.
    {
      std::vector<std::string> mates;
      for (const auto& m : view.cluster_units(view.cluster_of(unit)))
        if (m != unit && m != view.treated_unit()) mates.push_back(m);
      if (!mates.empty()) {
        std::vector<std::string> everyone{unit};
        everyone.insert(everyone.end(), mates.begin(), mates.end());
        std::vector<FeatureVector> feats =
            build_feature_vectors(view, spec, everyone, FeatureMode::within_cluster);
        if (opts.standardize_features) feats = standardize_dimensions(feats);
        Eigen::MatrixXd donors(feats.front().values.size(),
                               static_cast<Eigen::Index>(mates.size()));
        for (std::size_t j = 0; j < mates.size(); ++j)
          donors.col(static_cast<Eigen::Index>(j)) = feats[j + 1].values;
        const WeightVector w =
            PreparedProblem(std::move(donors), feats.front().values)
                .solve(penalties.lambda_star, solver);
        double ss = 0.0;
        for (int t : view.pre_times()) {
          double fitted = 0.0;
          for (std::size_t j = 0; j < mates.size(); ++j)
            fitted += w.weights(static_cast<Eigen::Index>(j)) *
                      view.value(mates[j], spec.outcome, t);
          const double r = view.value(unit, spec.outcome, t) - fitted;
          ss += r * r;
        }
        row[2] = std::sqrt(ss / static_cast<double>(view.pre_times().size()));
      }
    }
    table.values.push_back(std::move(row));
  }
  return table;
}

namespace {

std::string sanitize_filename(const std::string& name) {
  std::string out;
  for (char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  return out;
}

}  // namespace

void write_weights_csv(const std::string& path, const PanelDataset& ds,
                       const EstimationResult& r) {
  auto out = open_out(path);
  const auto targets_cluster = reporting_order(ds);
  std::vector<std::string> targets{ds.treated_unit()};
  for (const auto& n : ds.neighbors_of_treated()) targets.push_back(n);

  out << "donor_unit";
  out << ",direct__" << ds.treated_unit();
  for (const auto& n : ds.neighbors_of_treated()) out << ",spillover__" << n;
  out << ",unrealized__" << ds.treated_unit() << "\n";

  const std::set<std::string> pool(r.donor_pool.begin(), r.donor_pool.end());
  const auto neighbors = ds.neighbors_of_treated();
  const std::set<std::string> xi_pool(neighbors.begin(), neighbors.end());

  auto weight_of = [&](const CounterfactualSeries& cf, const std::string& donor)
      -> std::optional<double> {
    for (std::size_t j = 0; j < cf.donors_used.size(); ++j)
      if (cf.donors_used[j] == donor) return cf.weights_used.weights(static_cast<Eigen::Index>(j));
    return std::nullopt;
  };

  for (const auto& donor : targets_cluster) {
    out << donor;
    for (const auto& target : targets) {
      const auto it = r.zero_imputations.find(target);
      std::optional<double> w;
      if (it != r.zero_imputations.end() && pool.count(donor)) w = weight_of(it->second, donor);
      out << ',' << (w ? format_sig6(*w) : "-");
    }
    std::optional<double> w;
    if (r.star_imputation && xi_pool.count(donor)) w = weight_of(*r.star_imputation, donor);
    out << ',' << (w ? format_sig6(*w) : "-") << "\n";
  }
  require(out.good(), "write failed: " + path);
}

void write_balance_csv(const std::string& path, const PanelDataset& ds,
                       const EstimationResult& r) {
  auto out = open_out(path);
  std::optional<CounterfactualSeries> star = r.star_imputation;
  const BalanceTable table = balance_table(ds, r.zero_imputations, star);
  out << "level,time";
  for (const auto& c : table.columns) out << ',' << c;
  out << "\n";
  const char* levels[2] = {"unit", "neighborhood"};
  for (int level = 0; level < 2; ++level) {
    for (std::size_t ti = 0; ti < table.pre_times.size(); ++ti) {
      out << levels[level] << ',' << table.pre_times[ti];
      for (std::size_t c = 0; c < table.columns.size(); ++c) {
        const auto& v = table.entries[static_cast<std::size_t>(level)][ti][c];
        out << ',' << (v ? format_sig6(*v) : "-");
      }
      out << "\n";
    }
  }
  require(out.good(), "write failed: " + path);
}

void write_penalty_csv(const std::string& path, const std::string& variable,
                       const PenaltyConfig& p) {
  auto out = open_out(path);
  out << "variable,lambda_treated,lambda_neighbors,lambda_star,grid_size,grid\n";
  out << variable << ',' << format_sig6(p.lambda_treated) << ',' << format_sig6(p.lambda_neighbors)
      << ',' << format_sig6(p.lambda_star) << ',' << p.grid_size << ',' << p.grid_description
      << "\n";
  require(out.good(), "write failed: " + path);
}

void write_rmspe_csv(const std::string& path, const RmspeTable& table) {
  auto out = open_out(path);
  out << "unit,context,rmspe\n";
  for (std::size_t i = 0; i < table.units.size(); ++i)
    for (int c = 0; c < RmspeTable::n_contexts; ++c) {
      const auto& v = table.values[i][static_cast<std::size_t>(c)];
      out << table.units[i] << ',' << table.context_names[static_cast<std::size_t>(c)] << ','
          << (v ? format_sig6(*v) : "-") << "\n";
    }
  require(out.good(), "write failed: " + path);
}

namespace {

void write_effect_rows(std::ofstream& out, const EffectSeries& e, const std::string& name) {
  for (std::size_t i = 0; i < e.periods.size(); ++i)
    out << name << ',' << e.variable << ',' << e.periods[i] << ',' << format_sig6(e.values[i])
        << "\n";
}

}  // namespace

void write_effects_csv(const std::string& path, const EstimationResult& r) {
  auto out = open_out(path);
  out << "estimand,variable,period,value\n";
  write_effect_rows(out, r.direct, "direct");
  for (const auto& [unit, series] : r.spillover_individual)
    write_effect_rows(out, series, "spillover_individual:" + unit);
  if (r.spillover_average) write_effect_rows(out, *r.spillover_average, "spillover_average");
  if (r.unrealized) write_effect_rows(out, *r.unrealized, "unrealized");
  if (r.net) write_effect_rows(out, *r.net, "net_contrast");
  require(out.good(), "write failed: " + path);
}

void write_placebo_csv(const std::string& path, const std::string& variable,
                       const std::vector<PlaceboRun>& runs) {
  auto out = open_out(path);
  out << "estimand,variable,period,pseudo_unit,value,excluded,rmspe\n";
  for (const auto& run : runs) {
    for (const auto& [estimand, series] : run.effects) {
      const auto rit = run.pre_period_rmspe.find(estimand);
      const std::string rmspe =
          rit != run.pre_period_rmspe.end() ? format_sig6(rit->second) : "-";
      for (std::size_t i = 0; i < series.periods.size(); ++i)
        out << estimand_name(estimand) << ',' << variable << ',' << series.periods[i] << ','
            << run.pseudo_unit << ',' << format_sig6(series.values[i]) << ','
            << (run.excluded ? 1 : 0) << ',' << rmspe << "\n";
    }
  }
  require(out.good(), "write failed: " + path);
}

void write_cv_report_csv(const std::string& path, const std::vector<CvReport>& reports) {
  auto out = open_out(path);
  out << "criterion,lambda,rmspe\n";
  for (const auto& rep : reports)
    for (const auto& pt : rep.curve)
      out << rep.criterion << ',' << format_sig6(pt.lambda) << ',' << format_sig6(pt.rmspe)
          << "\n";
  require(out.good(), "write failed: " + path);
}

void write_placebo_summary_csv(const std::string& path,
                               const std::map<Estimand, PlaceboSummary>& summaries) {
  auto out = open_out(path);
  out << "estimand,variable,period,actual,rank,p_value,n_placebos\n";
  for (const auto& [estimand, s] : summaries) {
    for (std::size_t i = 0; i < s.periods.size(); ++i)
      out << estimand_name(estimand) << ',' << s.variable << ',' << s.periods[i] << ','
          << format_sig6(s.actual[i]) << ',' << s.rank[i] << ',' << format_sig6(s.p_value[i])
          << ',' << s.included_count << "\n";
    out << estimand_name(estimand) << ',' << s.variable << ",aggregate,"
        << format_sig6(s.aggregate_statistic) << ",-," << format_sig6(s.aggregate_p) << ','
        << s.included_count << "\n";
  }
  require(out.good(), "write failed: " + path);
}

VariableRunResult analyze_variable(const PanelDataset& ds, const RunConfig& config,
                                   const std::string& outcome, AnalysisStage stage) {
  VariableRunResult out;
  out.spec = feature_spec_for(config, outcome);

  out.matches = build_match_sets(ds, out.spec, config.match_count);

  if (config.fixed_penalties) {
    out.penalties = *config.fixed_penalties;
    out.penalties.check();
  } else {
    const LambdaGrid grid =
        config.log_grid ? log_uniform_grid(config.grid_size) : uniform_grid(config.grid_size);
    auto [lambda_treated, report_treated] = cv_lambda_cross(
        ds, out.spec, out.matches, CvTarget::treated, grid, config.standardize_features);
    auto [lambda_neighbors, report_neighbors] = cv_lambda_cross(
        ds, out.spec, out.matches, CvTarget::neighbors, grid, config.standardize_features);
    out.cv_reports.push_back(std::move(report_treated));
    out.cv_reports.push_back(std::move(report_neighbors));

    double lambda_star = 0.0;
    if (ds.neighbors_of_treated().size() >= 2) {
      auto [ls, report_star] = cv_lambda_star(ds, out.spec, grid, config.standardize_features);
      lambda_star = ls;
      out.cv_reports.push_back(std::move(report_star));
    } else {
      lambda_star = 0.5 * grid.values.back();
      out.warnings.push_back(
          "treated cluster has a single neighbor: within-cluster CV is undefined, "
          "lambda_star defaults to " +
          format_sig6(lambda_star));
    }
    out.penalties = {lambda_treated, lambda_neighbors, lambda_star,
                     static_cast<int>(grid.values.size()), grid.description};
  }
  if (stage == AnalysisStage::penalties) return out;

  EstimationOptions est_opts;
  est_opts.standardize_features = config.standardize_features;
  out.estimation = estimate_effects(ds, out.spec, out.penalties, est_opts);

  out.rmspe = build_rmspe_table(ds, out.spec, out.penalties, est_opts,
                                !config.placebo_include_true_cluster);
  if (stage == AnalysisStage::estimation) {
    for (const auto& w : out.estimation.warnings) out.warnings.push_back(w);
    return out;
  }

  PlaceboOptions placebo_opts;
  placebo_opts.exclude_true_treated_cluster = !config.placebo_include_true_cluster;
  placebo_opts.estimation = est_opts;
  out.placebo_runs = filter_by_rmspe(run_placebos(ds, out.spec, out.penalties, placebo_opts),
                                     config.rmspe_threshold);

  auto try_summary = [&](Estimand estimand, const EffectSeries& actual) {
    try {
      out.summaries.emplace(estimand, summarize(actual, out.placebo_runs));
    } catch (const Error& e) {
      out.warnings.push_back("no placebo summary for " + estimand_name(estimand) + ": " +
                             e.what());
    }
  };
  try_summary(Estimand::direct, out.estimation.direct);
  if (out.estimation.spillover_average)
    try_summary(Estimand::spillover_average, *out.estimation.spillover_average);
  if (out.estimation.unrealized) try_summary(Estimand::unrealized, *out.estimation.unrealized);
  if (out.estimation.net) try_summary(Estimand::net_contrast, *out.estimation.net);

  for (const auto& w : out.estimation.warnings) out.warnings.push_back(w);
  return out;
}

PipelineOutputs run_pipeline(const RunConfig& config, const PanelDataset& ds) {
  require(!config.output_dir.empty(), "output_dir is required");
  for (const auto& v : config.outcome_variables)
    require(ds.has_variable(v), "outcome variable " + v + " not in panel");
  for (const auto& v : config.covariate_variables)
    require(ds.has_variable(v), "covariate variable " + v + " not in panel");
  require(!config.outcome_variables.empty(), "at least one outcome variable is required");

  fs::create_directories(config.output_dir);

  PipelineOutputs outputs;
  std::vector<std::string> created;
  auto emit = [&](const std::string& name, auto&& writer) {
    const std::string path = (fs::path(config.output_dir) / name).string();
    writer(path);
    created.push_back(path);
    outputs.files.push_back(path);
  };

  try {
    for (const auto& outcome : config.outcome_variables) {
      VariableRunResult r = analyze_variable(ds, config, outcome, AnalysisStage::full);
      const std::string tag = sanitize_filename(outcome);
      emit("weights_" + tag + ".csv",
           [&](const std::string& p) { write_weights_csv(p, ds, r.estimation); });
      emit("balance_" + tag + ".csv",
           [&](const std::string& p) { write_balance_csv(p, ds, r.estimation); });
      emit("penalty_" + tag + ".csv",
           [&](const std::string& p) { write_penalty_csv(p, outcome, r.penalties); });
      emit("rmspe_" + tag + ".csv", [&](const std::string& p) { write_rmspe_csv(p, r.rmspe); });
      emit("effects_" + tag + ".csv",
           [&](const std::string& p) { write_effects_csv(p, r.estimation); });
      emit("placebo_" + tag + ".csv",
           [&](const std::string& p) { write_placebo_csv(p, outcome, r.placebo_runs); });
      outputs.per_variable.emplace(outcome, std::move(r));
    }

    // Manifest: config echo, versions and the emitted files. No timestamps,
    // so reruns are byte-identical.
    emit("manifest.json", [&](const std::string& p) {
      json manifest;
      manifest["pscg_version"] = std::string(version_string());
      manifest["config"] = json::parse(run_config_to_json(config));
      json files = json::array();
      for (const auto& f : outputs.files) files.push_back(fs::path(f).filename().string());
      files.push_back("manifest.json");
      manifest["files"] = files;
      json warnings = json::array();
      for (const auto& [var, r] : outputs.per_variable)
        for (const auto& w : r.warnings) warnings.push_back(var + ": " + w);
      manifest["warnings"] = warnings;
      auto out = open_out(p);
      out << manifest.dump(2) << "\n";
      require(out.good(), "write failed: " + p);
    });
  } catch (...) {
    for (const auto& f : created) {
      std::error_code ec;
      fs::remove(f, ec);
    }
    throw;
  }
  return outputs;
}

PipelineOutputs run_pipeline(const RunConfig& config) {
  require(!config.input_path.empty(), "input path is required");
  const IngestResult ingest = ingest_panel(config.input_path, config.outcome_variables,
                                           config.covariate_variables, config.treated_unit,
                                           config.t0);
  return run_pipeline(config, ingest.dataset);
}

}  // namespace pscg
