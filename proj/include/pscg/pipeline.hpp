#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pscg/estimator.hpp"
#include "pscg/io.hpp"
#include "pscg/matching.hpp"
#include "pscg/placebo.hpp"

namespace pscg {

struct RunConfig {
  std::string input_path;
  std::vector<std::string> outcome_variables;
  std::vector<std::string> covariate_variables;
  std::string treated_unit;
  int t0 = 0;

  int match_count = 5;
  int grid_size = 10000;
  bool log_grid = false;
  std::optional<PenaltyConfig> fixed_penalties;  // skips cross-validation

  double rmspe_threshold = 1.0;
  bool standardize_features = false;
  bool placebo_include_true_cluster = false;

  std::string output_dir;
  std::uint64_t seed = 0;  // consumed by the simulator only
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json(const RunConfig& config);

// Pre-period RMSPE of every unit's own synthetic fit under the three penalty
// contexts (value absent where the fit is undefined, e.g. the within-cluster
// context for singleton clusters).
struct RmspeTable {
  std::string variable;
  std::vector<std::string> units;         // cluster-grouped, treated cluster first
  static constexpr int n_contexts = 3;    // treated / neighbors / within-cluster
  std::vector<std::string> context_names;
  std::vector<std::vector<std::optional<double>>> values;  // [unit][context]
};

RmspeTable build_rmspe_table(const PanelDataset& ds, const FeatureSpec& spec,
                             const PenaltyConfig& penalties, const EstimationOptions& opts,
                             bool placebo_exclude_true_cluster);

struct VariableRunResult {
  FeatureSpec spec;
  MatchResult matches;
  PenaltyConfig penalties;
  std::vector<CvReport> cv_reports;
  EstimationResult estimation;
  RmspeTable rmspe;
  std::vector<PlaceboRun> placebo_runs;  // after the RMSPE filter
  std::map<Estimand, PlaceboSummary> summaries;
  std::vector<std::string> warnings;
};

struct PipelineOutputs {
  std::vector<std::string> files;  // absolute paths, emission order
  std::map<std::string, VariableRunResult> per_variable;
};

// How far to take one outcome variable's analysis: penalty selection only,
// estimation on top, or the full placebo study.
enum class AnalysisStage { penalties, estimation, full };

VariableRunResult analyze_variable(const PanelDataset& ds, const RunConfig& config,
                                   const std::string& outcome, AnalysisStage stage);

// The full batch pipeline: match, select penalties (or echo fixed ones),
// estimate, run placebos, and emit per-variable artifacts plus a manifest
// into config.output_dir. On error every file written so far is removed.
PipelineOutputs run_pipeline(const RunConfig& config, const PanelDataset& ds);
PipelineOutputs run_pipeline(const RunConfig& config);  // ingests config.input_path

// The units of the treated cluster in reporting order (treated unit first),
// then the controls grouped by cluster.
std::vector<std::string> reporting_order(const PanelDataset& ds);

// Feature spec for one outcome: the other outcomes act as covariates, then
// the declared covariates.
FeatureSpec feature_spec_for(const RunConfig& config, const std::string& outcome);

// Artifact writers (also used by the narrower CLI subcommands).
void write_weights_csv(const std::string& path, const PanelDataset& ds,
                       const EstimationResult& r);
void write_balance_csv(const std::string& path, const PanelDataset& ds,
                       const EstimationResult& r);
void write_penalty_csv(const std::string& path, const std::string& variable,
                       const PenaltyConfig& penalties);
void write_rmspe_csv(const std::string& path, const RmspeTable& table);
void write_effects_csv(const std::string& path, const EstimationResult& r);
void write_placebo_csv(const std::string& path, const std::string& variable,
                       const std::vector<PlaceboRun>& runs);
void write_cv_report_csv(const std::string& path, const std::vector<CvReport>& reports);
void write_placebo_summary_csv(const std::string& path,
                               const std::map<Estimand, PlaceboSummary>& summaries);

}  // namespace pscg
