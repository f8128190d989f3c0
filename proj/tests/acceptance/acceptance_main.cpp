// Acceptance suite: exercises the end-to-end statistical properties of the
// library on randomized and simulated inputs and prints one line per
// criterion. Exit code 0 iff everything passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pscg/estimator.hpp"
#include "pscg/io.hpp"
#include "pscg/penalty_cv.hpp"
#include "pscg/pipeline.hpp"
#include "pscg/placebo.hpp"
#include "pscg/simulate.hpp"
#include "pscg/solver.hpp"

using namespace pscg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

FeatureVector feature_from(std::vector<double> values,
                           std::shared_ptr<const FeatureLayout> layout) {
  FeatureVector fv;
  fv.values = Eigen::Map<Eigen::VectorXd>(values.data(),
                                          static_cast<Eigen::Index>(values.size()));
  fv.layout = std::move(layout);
  return fv;
}

std::shared_ptr<const FeatureLayout> layout_of(int dims) {
  auto layout = std::make_shared<FeatureLayout>();
  for (int i = 0; i < dims; ++i)
    layout->push_back({FeatureRole::unit_outcome, "y", i + 1});
  return layout;
}

SolveProblem random_problem(std::mt19937& rng, int min_donors, int max_donors, double lambda) {
  std::uniform_int_distribution<int> dim_d(1, 8);
  std::uniform_int_distribution<int> don_d(min_donors, max_donors);
  std::normal_distribution<double> g(0.0, 2.0);
  const int dims = dim_d(rng);
  const int n = don_d(rng);
  auto layout = layout_of(dims);
  std::vector<double> t(static_cast<std::size_t>(dims));
  for (auto& v : t) v = g(rng);
  SolveProblem p;
  p.target = feature_from(t, layout);
  for (int j = 0; j < n; ++j) {
    std::vector<double> d(static_cast<std::size_t>(dims));
    for (auto& v : d) v = g(rng);
    p.donors.push_back(feature_from(d, layout));
  }
  p.lambda = lambda;
  return p;
}

// --- 1. solver vs exhaustive lattice oracle ---------------------------------
Outcome solver_oracle_equivalence() {
  std::mt19937 rng(101);
  const double lambdas[] = {0.0, 0.01, 0.1, 1.0};
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const SolveProblem p = random_problem(rng, 2, 3, lambdas[i % 4]);
    const double solver_obj = solve_penalized_sc(p).objective_value;
    const double oracle_obj = grid_oracle(p, 1e-3).objective_value;
    worst = std::max(worst, std::abs(solver_obj - oracle_obj));
    if (solver_obj > oracle_obj + 1e-9) worst = std::max(worst, 1.0);  // solver must win
  }
  std::ostringstream os;
  os << "max |solver - oracle| = " << worst << " over 200 problems (tol 1e-3)";
  return {worst <= 1e-3, os.str()};
}

// --- 2. closed-form weights on the 1-D two-donor problem --------------------
Outcome closed_form_check() {
  auto layout = layout_of(1);
  double worst = 0.0;
  for (double lambda : {0.0, 1.0, 10.0}) {
    SolveProblem p;
    p.target = feature_from({0.0}, layout);
    p.donors = {feature_from({-2.0}, layout), feature_from({1.0}, layout)};
    p.lambda = lambda;
    const WeightVector w = solve_penalized_sc(p);
    const double expected = std::clamp((1.0 - lambda / 2.0) / 3.0, 0.0, 1.0);
    worst = std::max(worst, std::abs(w.weights(0) - expected));
  }
  std::ostringstream os;
  os << "max |omega_1 - (1 - lambda/2)/3| = " << worst << " (tol 1e-6)";
  return {worst <= 1e-6, os.str()};
}

// --- 3. lambda limits --------------------------------------------------------
Outcome lambda_limits() {
  std::mt19937 rng(303);
  double worst_gap = 0.0;
  int nn_misses = 0, nn_checked = 0;
  for (int i = 0; i < 50; ++i) {
    SolveProblem p = random_problem(rng, 2, 5, 0.0);
    const double fit0 = solve_penalized_sc(p).fit_term;
    p.lambda = 1e-8;
    worst_gap = std::max(worst_gap, std::abs(solve_penalized_sc(p).objective_value - fit0));

    Eigen::Index nn = 0;
    double best = std::numeric_limits<double>::infinity(), second = best;
    for (std::size_t j = 0; j < p.donors.size(); ++j) {
      const double d = (p.target.values - p.donors[j].values).squaredNorm();
      if (d < best) {
        second = best;
        best = d;
        nn = static_cast<Eigen::Index>(j);
      } else {
        second = std::min(second, d);
      }
    }
    if (second - best <= 1e-6) continue;  // needs a unique nearest neighbor
    ++nn_checked;
    p.lambda = 1e6;
    Eigen::Index argmax = 0;
    solve_penalized_sc(p).weights.maxCoeff(&argmax);
    if (argmax != nn) ++nn_misses;
  }
  std::ostringstream os;
  os << "objective gap at lambda=1e-8: " << worst_gap << " (tol 1e-6); nearest-neighbor argmax "
     << (nn_checked - nn_misses) << "/" << nn_checked;
  return {worst_gap <= 1e-6 && nn_misses == 0, os.str()};
}

// --- 4. simulation recovery --------------------------------------------------
Outcome simulation_recovery() {
  SimSpec spec;  // 45 units, 11 clusters, T0=2, T=10, 2 outcome variables
  spec.noise_sd = 0.05;
  spec.tau = {2.0};
  spec.delta = {1.0};
  const LambdaGrid grid = uniform_grid(100);

  double abs_tau = 0.0, sum_tau = 0.0, abs_delta = 0.0, sum_delta = 0.0;
  int n_tau = 0, n_delta = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto [ds, truth] = generate_synthetic_panel(spec, seed);
    for (const auto& var : ds.outcome_variables()) {
      const FeatureSpec fspec = feature_spec_for_outcome(ds, var);
      const MatchResult matches = build_match_sets(ds, fspec, 5);
      PenaltyConfig penalties;
      penalties.lambda_treated = cv_lambda_cross(ds, fspec, matches, CvTarget::treated, grid).first;
      penalties.lambda_neighbors =
          cv_lambda_cross(ds, fspec, matches, CvTarget::neighbors, grid).first;
      penalties.lambda_star = cv_lambda_star(ds, fspec, grid).first;
      penalties.grid_size = static_cast<int>(grid.values.size());

      EstimationOptions opts;
      opts.solver.check_uniqueness = false;
      const EstimationResult r = estimate_effects(ds, fspec, penalties, opts);
      for (std::size_t i = 0; i < r.direct.values.size(); ++i) {
        const double e_tau = r.direct.values[i] - truth.tau[i];
        abs_tau += std::abs(e_tau);
        sum_tau += e_tau;
        ++n_tau;
        const double e_delta = r.spillover_average->values[i] - truth.delta[i];
        abs_delta += std::abs(e_delta);
        sum_delta += e_delta;
        ++n_delta;
      }
    }
  }
  const double mae_tau = abs_tau / n_tau, bias_tau = sum_tau / n_tau;
  const double mae_delta = abs_delta / n_delta, bias_delta = sum_delta / n_delta;
  std::ostringstream os;
  os << "MAE(tau)=" << mae_tau << " MAE(delta)=" << mae_delta << " (tol 0.3); bias(tau)="
     << bias_tau << " bias(delta)=" << bias_delta << " (tol 0.1); 50 panels x 2 variables";
  return {mae_tau <= 0.3 && mae_delta <= 0.3 && std::abs(bias_tau) <= 0.1 &&
              std::abs(bias_delta) <= 0.1,
          os.str()};
}

// --- 5. null calibration ------------------------------------------------------
Outcome null_calibration() {
  SimSpec spec;
  // Exchangeable clusters: equal sizes and iid loadings, so every unit's
  // placebo statistic is distributed exactly like the treated unit's.
  spec.cluster_sizes.assign(11, 4);
  spec.noise_sd = 0.05;
  spec.planted_weights = false;
  const PenaltyConfig penalties{0.05, 0.05, 0.05, 0, "fixed"};

  std::vector<double> pvals;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto [ds, truth] = generate_synthetic_panel(spec, seed);
    const FeatureSpec fspec = feature_spec_for_outcome(ds, "y1");
    EstimationOptions eopts;
    eopts.solver.check_uniqueness = false;
    const EstimationResult actual = estimate_effects(ds, fspec, penalties, eopts);

    PlaceboOptions popts;
    // Symmetric donor pools: under the null there is no contamination, so
    // every run (actual or placebo) excludes exactly its own cluster.
    popts.exclude_true_treated_cluster = false;
    popts.estimation = eopts;
    const auto runs = filter_by_rmspe(run_placebos(ds, fspec, penalties, popts), 1.0);
    pvals.push_back(summarize(actual.direct, runs).aggregate_p);
  }
  std::sort(pvals.begin(), pvals.end());
  double ks = 0.0;
  const double n = static_cast<double>(pvals.size());
  for (std::size_t i = 0; i < pvals.size(); ++i) {
    ks = std::max(ks, std::abs(pvals[i] - static_cast<double>(i) / n));
    ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - pvals[i]));
  }
  std::ostringstream os;
  os << "KS distance of 200 null p-values from U(0,1) = " << ks << " (tol 0.15)";
  return {ks <= 0.15, os.str()};
}

// --- 6. exact accounting identities -------------------------------------------
Outcome exact_identities() {
  SimSpec spec;
  spec.cluster_sizes = {4, 4, 4, 3, 3};
  spec.n_post = 4;
  spec.tau = {1.0};
  spec.delta = {0.4};
  bool ok = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto [ds, truth] = generate_synthetic_panel(spec, seed);
    const FeatureSpec fspec = feature_spec_for_outcome(ds, "y1");
    const PenaltyConfig penalties{0.1, 0.1, 0.1, 0, "fixed"};
    const EstimationResult r = estimate_effects(ds, fspec, penalties);
    verify_effect_identities(ds, r);  // throws on violation

    const auto post = ds.post_times();
    const auto neighbors = ds.neighbors_of_treated();
    for (std::size_t i = 0; i < post.size(); ++i) {
      ok = ok && r.direct.values[i] ==
                     ds.value(ds.treated_unit(), "y1", post[i]) -
                         r.zero_imputations.at(ds.treated_unit()).values[i];
      double sum = 0.0;
      for (const auto& nb : neighbors) sum += r.spillover_individual.at(nb).values[i];
      ok = ok && r.spillover_average->values[i] == sum / static_cast<double>(neighbors.size());
      ok = ok && r.net->values[i] == r.direct.values[i] - r.unrealized->values[i];
    }

    EstimationResult tampered = r;
    tampered.net->values[0] += 1e-6;
    bool threw = false;
    try {
      verify_effect_identities(ds, tampered);
    } catch (const Error&) {
      threw = true;
    }
    ok = ok && threw;
  }
  return {ok, "direct/average/net identities hold to machine precision on 3 panels"};
}

// --- 7. RMSPE filter rule -------------------------------------------------------
Outcome rmspe_filter_rule() {
  auto run_with = [](const std::string& unit, double rmspe) {
    PlaceboRun run;
    run.pseudo_unit = unit;
    EffectSeries e;
    e.estimand = Estimand::direct;
    e.variable = "y";
    e.periods = {3};
    e.values = {1.0};
    run.effects.emplace(Estimand::direct, e);
    run.pre_period_rmspe[Estimand::direct] = rmspe;
    return run;
  };
  std::vector<PlaceboRun> runs{run_with("high", 5.905), run_with("low", 0.202),
                               run_with("edge", 1.0)};
  const auto filtered = filter_by_rmspe(runs, 1.0);
  const bool flags_ok = filtered[0].excluded && !filtered[1].excluded && !filtered[2].excluded;

  EffectSeries actual;
  actual.estimand = Estimand::direct;
  actual.variable = "y";
  actual.periods = {3};
  actual.values = {2.0};
  const PlaceboSummary s = summarize(actual, filtered);
  const bool summary_ok = s.included_count == 2 &&
                          std::find(s.placebo_units.begin(), s.placebo_units.end(), "high") ==
                              s.placebo_units.end();
  return {flags_ok && summary_ok,
          "RMSPE 5.905 excluded, 0.202 and the boundary 1.0 kept, exclusions absent from summaries"};
}

// --- 8. CV determinism and the tie rule -----------------------------------------
Outcome cv_determinism() {
  std::vector<PanelObservation> rows;
  auto add = [&rows](const std::string& u, const std::string& c, std::vector<double> v) {
    for (std::size_t i = 0; i < v.size(); ++i)
      rows.push_back({u, c, static_cast<int>(i) + 1, "y", v[i]});
  };
  add("a1", "A", {1, 5, 9, 9});
  add("a2", "A", {2, 6, 8, 8});
  add("b1", "B", {2, 50, 7, 7});
  add("b2", "B", {1, 60, 1, 1});
  add("c1", "C", {30, 6, 6.5, 6.5});
  add("c2", "C", {40, 5, 2, 2});
  const PanelDataset ds = PanelDataset::create(rows, {"y"}, {}, "a1", 2);
  const FeatureSpec spec{"y", {}};
  const MatchResult matches = build_match_sets(ds, spec, 1);

  LambdaGrid grid;
  grid.values = {0.5, 1.0};
  const auto [l1, r1] = cv_lambda_cross(ds, spec, matches, CvTarget::neighbors, grid);
  const auto [l2, r2] = cv_lambda_cross(ds, spec, matches, CvTarget::neighbors, grid);
  const bool deterministic = l1 == l2 && r1.curve[0].rmspe == r2.curve[0].rmspe &&
                             r1.curve[1].rmspe == r2.curve[1].rmspe;
  const bool tie_rule = r1.curve[0].rmspe == r1.curve[1].rmspe && l1 == 0.5;
  std::ostringstream os;
  os << "repeated runs identical; exact tie chose lambda = " << l1 << " over 1.0";
  return {deterministic && tie_rule, os.str()};
}

// --- 9. structural format checks --------------------------------------------------
Outcome structural_formats() {
  bool ok = true;
  std::ostringstream os;

  const LambdaGrid g = default_grid();
  ok = ok && g.values.size() == 10000 && g.values.front() > 0.0 &&
       g.values.front() == 0.0001 && g.values.back() == 1.0;

  SimSpec spec;
  spec.cluster_sizes = {3, 3, 3, 2, 2};
  spec.n_post = 3;
  spec.n_outcomes = 1;
  spec.planted_weights = false;
  spec.noise_sd = 0.05;
  const auto [ds, truth] = generate_synthetic_panel(spec, 99);

  RunConfig config;
  config.outcome_variables = ds.outcome_variables();
  config.treated_unit = ds.treated_unit();
  config.t0 = ds.t0();
  config.match_count = 3;
  config.grid_size = 8;
  config.output_dir = "acceptance_artifacts";
  const PipelineOutputs out = run_pipeline(config, ds);
  ok = ok && out.files.size() == 7;

  // Weight table: one donor column plus the treated unit's direct column,
  // one spillover column per neighbor, and the within-cluster column.
  {
    std::ifstream in(out.files[0]);
    std::string header;
    std::getline(in, header);
    std::istringstream is(header);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(is, field, ',')) fields.push_back(field);
    const std::size_t expected = 2 + ds.neighbors_of_treated().size() + 1;
    ok = ok && fields.size() == expected && fields[0] == "donor_unit" &&
         fields[1].rfind("direct__", 0) == 0 && fields.back().rfind("unrealized__", 0) == 0;
    std::size_t data_rows = 0;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ++data_rows;
    ok = ok && data_rows == ds.n_units();
  }

  // Balance table: unit and neighborhood rows for each pre period.
  {
    std::ifstream in(out.files[1]);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> labels;
    while (std::getline(in, line))
      if (!line.empty()) labels.push_back(line.substr(0, line.find(',', line.find(',') + 1)));
    const std::vector<std::string> expected{"unit,1", "unit,2", "neighborhood,1",
                                            "neighborhood,2"};
    ok = ok && labels == expected;
  }

  std::error_code ec;
  std::filesystem::remove_all(config.output_dir, ec);
  os << "grid = 10000 points in (0,1]; weight and balance table layouts check out";
  return {ok, os.str()};
}

}  // namespace

int main() {
  using Clock = std::chrono::steady_clock;
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double budget_s;  // 0 = no budget
  };
  const std::vector<Criterion> criteria{
      {1, "solver-oracle equivalence", solver_oracle_equivalence, 30.0},
      {2, "closed-form two-donor weights", closed_form_check, 0.0},
      {3, "lambda limit behavior", lambda_limits, 0.0},
      {4, "simulation recovery of tau and delta", simulation_recovery, 300.0},
      {5, "null placebo calibration", null_calibration, 0.0},
      {6, "exact accounting identities", exact_identities, 0.0},
      {7, "RMSPE placebo filter rule", rmspe_filter_rule, 0.0},
      {8, "CV determinism and tie rule", cv_determinism, 0.0},
      {9, "structural format checks", structural_formats, 0.0},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed =
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count() /
        1000.0;
    bool pass = outcome.pass;
    std::string note = outcome.detail;
    if (c.budget_s > 0.0 && elapsed > c.budget_s) {
      pass = false;
      note += " [over the " + std::to_string(c.budget_s) + " s budget]";
    }
    std::printf("[%d] %-40s %s (%.1f s) %s\n", c.id, c.name, pass ? "PASS" : "FAIL", elapsed,
                note.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  std::printf("%s: %d/%zu criteria passed\n", failures == 0 ? "SUCCESS" : "FAILURE",
              static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
