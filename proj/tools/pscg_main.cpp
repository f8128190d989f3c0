// Batch front-end for penalized synthetic-control estimation on clustered
// panels: dataset validation, donor matching, penalty selection, effect
// estimation, in-space placebo inference and synthetic-panel generation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "pscg/pipeline.hpp"
#include "pscg/simulate.hpp"
#include "pscg/version.hpp"

namespace fs = std::filesystem;
using namespace pscg;

namespace {

struct CliState {
  std::string config_path;
  RunConfig config;
  // Simulator knobs.
  SimSpec sim;
  std::string sim_clusters = "6,6,6,6,5,4,3,3,2,2,2";
  std::vector<double> sim_tau, sim_delta, sim_gamma;
  std::string sim_panel_out = "panel.csv";
  std::string sim_truth_out;
  std::vector<double> fixed_lambdas;
};

void add_common_options(CLI::App* cmd, CliState& s, bool needs_output) {
  cmd->add_option("-c,--config", s.config_path, "JSON config file; flags override its fields");
  cmd->add_option("-i,--input", s.config.input_path, "long-format panel CSV");
  cmd->add_option("--outcomes", s.config.outcome_variables, "outcome variable names")
      ->delimiter(',');
  cmd->add_option("--covariates", s.config.covariate_variables, "covariate variable names")
      ->delimiter(',');
  cmd->add_option("--treated-unit", s.config.treated_unit, "id of the treated unit");
  cmd->add_option("--t0", s.config.t0, "last pre-treatment period");
  cmd->add_option("-m,--match-count", s.config.match_count,
                  "nearest neighbors per unit and pre period (default 5)");
  cmd->add_option("--grid-size", s.config.grid_size, "penalty grid size (default 10000)");
  cmd->add_flag("--log-grid", s.config.log_grid, "log-spaced penalty grid");
  cmd->add_option("--fixed-lambdas", s.fixed_lambdas,
                  "treated,neighbors,star penalties; skips cross-validation")
      ->delimiter(',')
      ->expected(3);
  cmd->add_option("--rmspe-threshold", s.config.rmspe_threshold,
                  "placebo pre-period RMSPE exclusion threshold (default 1.0)");
  cmd->add_flag("--standardize", s.config.standardize_features,
                "divide every feature dimension by its cross-unit standard deviation");
  cmd->add_flag("--placebo-include-true-cluster", s.config.placebo_include_true_cluster,
                "keep the truly treated cluster in placebo donor pools");
  if (needs_output)
    cmd->add_option("-o,--output-dir", s.config.output_dir, "artifact output directory");
}

// Flags override config-file fields: reload the file first, then re-parse the
// command line on top of it.
RunConfig resolve_config(const CliState& s, const CLI::App* cmd) {
  RunConfig config = s.config_path.empty() ? RunConfig{} : load_run_config(s.config_path);
  auto overridden = [&](const std::string& name) {
    const CLI::Option* o = cmd->get_option_no_throw(name);
    return o != nullptr && o->count() > 0;
  };
  if (overridden("--input")) config.input_path = s.config.input_path;
  if (overridden("--outcomes")) config.outcome_variables = s.config.outcome_variables;
  if (overridden("--covariates")) config.covariate_variables = s.config.covariate_variables;
  if (overridden("--treated-unit")) config.treated_unit = s.config.treated_unit;
  if (overridden("--t0")) config.t0 = s.config.t0;
  if (overridden("--match-count")) config.match_count = s.config.match_count;
  if (overridden("--grid-size")) config.grid_size = s.config.grid_size;
  if (overridden("--log-grid")) config.log_grid = s.config.log_grid;
  if (overridden("--rmspe-threshold")) config.rmspe_threshold = s.config.rmspe_threshold;
  if (overridden("--standardize")) config.standardize_features = s.config.standardize_features;
  if (overridden("--placebo-include-true-cluster"))
    config.placebo_include_true_cluster = s.config.placebo_include_true_cluster;
  if (overridden("--output-dir")) config.output_dir = s.config.output_dir;
  if (!s.fixed_lambdas.empty()) {
    PenaltyConfig p;
    p.lambda_treated = s.fixed_lambdas[0];
    p.lambda_neighbors = s.fixed_lambdas[1];
    p.lambda_star = s.fixed_lambdas[2];
    p.grid_description = "fixed by flag";
    config.fixed_penalties = p;
  }
  return config;
}

PanelDataset load_panel(const RunConfig& config, std::size_t* rows = nullptr) {
  require(!config.input_path.empty(), "--input (or config \"input\") is required");
  require(!config.outcome_variables.empty(), "--outcomes is required");
  require(!config.treated_unit.empty(), "--treated-unit is required");
  IngestResult in = ingest_panel(config.input_path, config.outcome_variables,
                                 config.covariate_variables, config.treated_unit, config.t0);
  if (rows) *rows = in.data_rows;
  return in.dataset;
}

std::string out_path(const RunConfig& config, const std::string& name) {
  require(!config.output_dir.empty(), "--output-dir is required");
  fs::create_directories(config.output_dir);
  return (fs::path(config.output_dir) / name).string();
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_validate(const RunConfig& config) {
  std::size_t rows = 0;
  const PanelDataset ds = load_panel(config, &rows);
  std::cout << "panel OK: " << rows << " rows, " << ds.n_units() << " units, "
            << ds.clusters().size() << " clusters, " << ds.times().size() << " periods ("
            << ds.n_pre_periods() << " pre + " << ds.n_post_periods() << " post), "
            << ds.outcome_variables().size() << " outcome variable(s), "
            << ds.covariate_variables().size() << " covariate(s)\n";
  std::cout << "treated unit " << ds.treated_unit() << " in cluster " << ds.treated_cluster()
            << " (" << ds.cluster_units(ds.treated_cluster()).size() << " units)\n";
  return 0;
}

int cmd_match(const RunConfig& config) {
  const PanelDataset ds = load_panel(config);
  for (const auto& outcome : config.outcome_variables) {
    const FeatureSpec spec = feature_spec_for(config, outcome);
    const MatchResult m = build_match_sets(ds, spec, config.match_count);
    const std::string tag = sanitize(outcome);

    std::ofstream sets(out_path(config, "match_" + tag + ".csv"));
    sets << "anchor,matched_unit,matched_cluster\n";
    for (const auto& [anchor, ms] : m.by_anchor)
      for (const auto& u : ms.matched)
        sets << anchor << ',' << u << ',' << ds.cluster_of(u) << "\n";

    std::ofstream detail(out_path(config, "match_detail_" + tag + ".csv"));
    detail << "anchor,period,rank,unit,distance\n";
    for (const auto& [anchor, ms] : m.by_anchor)
      for (const auto& [period, ranked] : ms.per_period)
        for (std::size_t k = 0; k < ranked.size() && k < static_cast<std::size_t>(config.match_count); ++k)
          detail << anchor << ',' << period << ',' << k + 1 << ',' << ranked[k].unit << ','
                 << format_sig6(ranked[k].distance) << "\n";

    std::cout << outcome << ": matched " << m.h_treated.size() << " controls to the treated unit, "
              << m.h_union.size() << " to its neighbors\n";
  }
  return 0;
}

int cmd_cv(const RunConfig& config) {
  const PanelDataset ds = load_panel(config);
  for (const auto& outcome : config.outcome_variables) {
    const VariableRunResult r = analyze_variable(ds, config, outcome, AnalysisStage::penalties);
    const std::string tag = sanitize(outcome);
    write_penalty_csv(out_path(config, "penalty_" + tag + ".csv"), outcome, r.penalties);
    write_cv_report_csv(out_path(config, "cv_report_" + tag + ".csv"), r.cv_reports);
    print_warnings(r.warnings);
    std::cout << outcome << ": lambda_treated=" << format_sig6(r.penalties.lambda_treated)
              << " lambda_neighbors=" << format_sig6(r.penalties.lambda_neighbors)
              << " lambda_star=" << format_sig6(r.penalties.lambda_star) << "\n";
  }
  return 0;
}

void print_effect_line(const EffectSeries& e, const std::string& label) {
  std::cout << "  " << label << ":";
  for (double v : e.values) std::cout << ' ' << format_sig6(v);
  std::cout << "\n";
}

int cmd_estimate(const RunConfig& config) {
  const PanelDataset ds = load_panel(config);
  for (const auto& outcome : config.outcome_variables) {
    const VariableRunResult r = analyze_variable(ds, config, outcome, AnalysisStage::estimation);
    const std::string tag = sanitize(outcome);
    write_weights_csv(out_path(config, "weights_" + tag + ".csv"), ds, r.estimation);
    write_balance_csv(out_path(config, "balance_" + tag + ".csv"), ds, r.estimation);
    write_penalty_csv(out_path(config, "penalty_" + tag + ".csv"), outcome, r.penalties);
    write_rmspe_csv(out_path(config, "rmspe_" + tag + ".csv"), r.rmspe);
    write_effects_csv(out_path(config, "effects_" + tag + ".csv"), r.estimation);
    print_warnings(r.warnings);
    std::cout << outcome << " effects over periods";
    for (int t : ds.post_times()) std::cout << ' ' << t;
    std::cout << "\n";
    print_effect_line(r.estimation.direct, "direct");
    if (r.estimation.spillover_average)
      print_effect_line(*r.estimation.spillover_average, "spillover_average");
    if (r.estimation.unrealized) print_effect_line(*r.estimation.unrealized, "unrealized");
    if (r.estimation.net) print_effect_line(*r.estimation.net, "net_contrast");
  }
  return 0;
}

int cmd_placebo(const RunConfig& config) {
  const PanelDataset ds = load_panel(config);
  for (const auto& outcome : config.outcome_variables) {
    const VariableRunResult r = analyze_variable(ds, config, outcome, AnalysisStage::full);
    const std::string tag = sanitize(outcome);
    write_placebo_csv(out_path(config, "placebo_" + tag + ".csv"), outcome, r.placebo_runs);
    write_placebo_summary_csv(out_path(config, "placebo_summary_" + tag + ".csv"), r.summaries);
    print_warnings(r.warnings);
    std::cout << outcome << " aggregate placebo p-values:";
    for (const auto& [estimand, summary] : r.summaries)
      std::cout << ' ' << estimand_name(estimand) << '=' << format_sig6(summary.aggregate_p);
    std::cout << "\n";
  }
  return 0;
}

int cmd_run(const RunConfig& config) {
  const PipelineOutputs out = run_pipeline(config);
  for (const auto& [var, r] : out.per_variable) print_warnings(r.warnings);
  std::cout << "wrote " << out.files.size() << " artifacts to " << config.output_dir << "\n";
  for (const auto& f : out.files) std::cout << "  " << fs::path(f).filename().string() << "\n";
  return 0;
}

int cmd_simulate(CliState& s, std::uint64_t seed) {
  s.sim.cluster_sizes.clear();
  {
    std::istringstream is(s.sim_clusters);
    std::string tok;
    while (std::getline(is, tok, ',')) s.sim.cluster_sizes.push_back(std::stoi(tok));
  }
  s.sim.tau = s.sim_tau;
  s.sim.delta = s.sim_delta;
  s.sim.gamma = s.sim_gamma;
  const auto [ds, truth] = generate_synthetic_panel(s.sim, seed);
  emit_panel(ds, s.sim_panel_out);
  std::cout << "wrote " << s.sim_panel_out << ": " << ds.n_units() << " units, "
            << ds.clusters().size() << " clusters, " << ds.times().size() << " periods, treated "
            << ds.treated_unit() << ", t0=" << ds.t0() << "\n";
  if (!s.sim_truth_out.empty()) {
    std::ofstream out(s.sim_truth_out);
    require(out.good(), "cannot write " + s.sim_truth_out);
    out << "estimand,period,value\n";
    for (std::size_t i = 0; i < truth.post_times.size(); ++i) {
      out << "tau," << truth.post_times[i] << ',' << format_full(truth.tau[i]) << "\n";
      out << "delta," << truth.post_times[i] << ',' << format_full(truth.delta[i]) << "\n";
      out << "gamma," << truth.post_times[i] << ',' << format_full(truth.gamma[i]) << "\n";
    }
    std::cout << "wrote " << s.sim_truth_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"penalized synthetic controls with spillovers for clustered panels"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  CliState s;
  std::uint64_t seed = 0;

  CLI::App* validate = app.add_subcommand("validate", "ingest a panel and check its invariants");
  add_common_options(validate, s, false);

  CLI::App* match = app.add_subcommand("match", "build Mahalanobis matched donor sets");
  add_common_options(match, s, true);

  CLI::App* cv = app.add_subcommand("cv", "select the penalty terms by cross-validation");
  add_common_options(cv, s, true);

  CLI::App* estimate =
      app.add_subcommand("estimate", "estimate direct, spillover and unrealized-spillover effects");
  add_common_options(estimate, s, true);

  CLI::App* placebo = app.add_subcommand("placebo", "run in-space placebo studies and p-values");
  add_common_options(placebo, s, true);

  CLI::App* run = app.add_subcommand("run", "full pipeline: match, cv, estimate, placebo, tables");
  add_common_options(run, s, true);

  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic clustered panel");
  simulate->add_option("--clusters", s.sim_clusters, "comma-separated cluster sizes, treated first");
  simulate->add_option("--pre", s.sim.n_pre, "pre-treatment periods (default 2)");
  simulate->add_option("--post", s.sim.n_post, "post-treatment periods (default 8)");
  simulate->add_option("--outcomes", s.sim.n_outcomes, "number of outcome variables (default 2)");
  simulate->add_option("--covariates", s.sim.n_covariates, "number of extra covariates");
  simulate->add_option("--factors", s.sim.n_factors, "number of common factors (default 1)");
  simulate->add_option("--noise-sd", s.sim.noise_sd, "iid noise standard deviation");
  simulate->add_option("--tau", s.sim_tau, "injected direct effect per post period")->delimiter(',');
  simulate->add_option("--delta", s.sim_delta, "injected spillover per post period")->delimiter(',');
  simulate->add_option("--gamma", s.sim_gamma, "recorded unrealized-spillover truth")->delimiter(',');
  simulate->add_flag("!--no-planted", s.sim.planted_weights,
                     "draw all loadings iid instead of planting exact weights");
  simulate->add_option("--seed", seed, "RNG seed (simulate only)");
  simulate->add_option("-o,--output", s.sim_panel_out, "panel CSV path (default panel.csv)");
  simulate->add_option("--truth", s.sim_truth_out, "also write the ground-truth effect CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(resolve_config(s, validate));
    if (match->parsed()) return cmd_match(resolve_config(s, match));
    if (cv->parsed()) return cmd_cv(resolve_config(s, cv));
    if (estimate->parsed()) return cmd_estimate(resolve_config(s, estimate));
    if (placebo->parsed()) return cmd_placebo(resolve_config(s, placebo));
    if (run->parsed()) return cmd_run(resolve_config(s, run));
    if (simulate->parsed()) return cmd_simulate(s, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
