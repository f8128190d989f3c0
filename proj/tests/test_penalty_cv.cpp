#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "pscg/penalty_cv.hpp"

using namespace pscg;
using pscg_test::PanelBuilder;

TEST_CASE("the default grid is 10000 uniform points on (0, 1]") {
  const LambdaGrid g = default_grid();
  REQUIRE(g.values.size() == 10000);
  CHECK(g.values.front() == 0.0001);
  CHECK(g.values.back() == 1.0);
  for (double v : g.values) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(uniform_grid(0), Error);
}

TEST_CASE("log grid spans the requested range") {
  const LambdaGrid g = log_uniform_grid(5, 1e-2);
  REQUIRE(g.values.size() == 5);
  CHECK(g.values.front() == doctest::Approx(1e-2));
  CHECK(g.values.back() == 1.0);
  CHECK(std::is_sorted(g.values.begin(), g.values.end()));
}

TEST_CASE("pooled RMSPE hand arithmetic") {
  // One pseudo unit, two post periods: residuals (1,1) vs (0,2).
  CHECK(pooled_rmspe(1.0 * 1 + 1.0 * 1, 1, 2) == doctest::Approx(1.0));
  CHECK(pooled_rmspe(0.0 + 4.0, 1, 2) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(pooled_rmspe(1.0, 0, 2), Error);
}

namespace {

// Two outcome profiles; each cluster holds one unit of each type, so every
// control is an exact copy of the out-of-cluster controls of its type, in
// features and in every period.
PanelDataset two_type_panel() {
  const std::vector<double> p{1, 2, 3, 4}, q{5, 7, 6, 8};
  PanelBuilder pb;
  pb.treated = "a1";
  pb.series("a1", "A", "y", p);
  pb.series("a2", "A", "y", q);
  pb.series("b1", "B", "y", p);
  pb.series("b2", "B", "y", q);
  pb.series("c1", "C", "y", p);
  pb.series("c2", "C", "y", q);
  pb.series("d1", "D", "y", p);
  pb.series("d2", "D", "y", q);
  return pb.build();
}

// Matched sets of the untreated anchor are {b1} in period 1 and {c1} in
// period 2 (zero-distance row replicas), so each pseudo unit has exactly one
// donor and every lambda yields identical residuals: an exact RMSPE tie.
PanelDataset single_donor_tie_panel() {
  PanelBuilder pb;
  pb.treated = "a1";
  pb.series("a1", "A", "y", {1, 5, 9, 9});
  pb.series("a2", "A", "y", {2, 6, 8, 8});
  pb.series("b1", "B", "y", {2, 50, 7, 7});
  pb.series("b2", "B", "y", {1, 60, 1, 1});
  pb.series("c1", "C", "y", {30, 6, 6.5, 6.5});
  pb.series("c2", "C", "y", {40, 5, 2, 2});
  return pb.build();
}

}  // namespace

TEST_CASE("single-candidate grids are forced") {
  const PanelDataset ds = two_type_panel();
  const FeatureSpec spec{"y", {}};
  const MatchResult matches = build_match_sets(ds, spec, 2);
  LambdaGrid grid;
  grid.values = {0.25};
  const auto [lambda, report] = cv_lambda_cross(ds, spec, matches, CvTarget::treated, grid);
  CHECK(lambda == 0.25);
  REQUIRE(report.curve.size() == 1);
  CHECK(report.chosen_rmspe == report.curve.front().rmspe);
}

TEST_CASE("exact convex combinations drive the RMSPE to zero and ties pick the smallest lambda") {
  const PanelDataset ds = two_type_panel();
  const FeatureSpec spec{"y", {}};
  const MatchResult matches = build_match_sets(ds, spec, 3);

  const LambdaGrid grid = uniform_grid(10);
  for (CvTarget which : {CvTarget::treated, CvTarget::neighbors}) {
    const auto [lambda, report] = cv_lambda_cross(ds, spec, matches, which, grid);
    CHECK(lambda == grid.values.front());
    for (const auto& pt : report.curve) CHECK(pt.rmspe < 1e-8);
  }
}

TEST_CASE("an exact tie across candidates selects the smaller lambda") {
  const PanelDataset ds = single_donor_tie_panel();
  const FeatureSpec spec{"y", {}};
  const MatchResult matches = build_match_sets(ds, spec, 1);
  REQUIRE(matches.h_union == std::vector<std::string>{"b1", "c1"});

  LambdaGrid grid;
  grid.values = {0.5, 1.0};
  const auto [lambda, report] = cv_lambda_cross(ds, spec, matches, CvTarget::neighbors, grid);
  CHECK(report.curve[0].rmspe == report.curve[1].rmspe);
  CHECK(lambda == 0.5);
  CHECK(report.curve[0].rmspe == doctest::Approx(0.5));  // residuals +-0.5 everywhere
}

TEST_CASE("cross-validation agrees with a brute-force reimplementation") {
  std::mt19937 rng(321);
  std::uniform_real_distribution<double> u(0.0, 8.0);
  PanelBuilder pb;
  pb.treated = "a1";
  for (const auto& [cluster, unit] :
       std::vector<std::pair<std::string, std::string>>{{"A", "a1"}, {"A", "a2"}, {"A", "a3"},
                                                        {"B", "b1"}, {"B", "b2"}, {"B", "b3"},
                                                        {"C", "c1"}, {"C", "c2"},
                                                        {"D", "d1"}, {"D", "d2"}}) {
    std::vector<double> y(6);
    for (auto& v : y) v = u(rng);
    pb.series(unit, cluster, "y", y);
  }
  const PanelDataset ds = pb.build();
  const FeatureSpec spec{"y", {}};
  const MatchResult matches = build_match_sets(ds, spec, 2);
  LambdaGrid grid;
  grid.values = {0.05, 0.4, 1.0};

  for (CvTarget which : {CvTarget::treated, CvTarget::neighbors}) {
    const auto [lambda, report] = cv_lambda_cross(ds, spec, matches, which, grid);

    const auto& pseudo_set = which == CvTarget::treated ? matches.h_treated : matches.h_union;
    SolverOptions opts;
    opts.check_uniqueness = false;
    std::vector<double> expected;
    for (double lam : grid.values) {
      double ss = 0.0;
      int included = 0;
      for (const auto& unit : pseudo_set) {
        std::vector<std::string> pool;
        for (const auto& d : pseudo_set)
          if (ds.cluster_of(d) != ds.cluster_of(unit)) pool.push_back(d);
        if (pool.empty()) continue;
        ++included;
        std::vector<std::string> all{unit};
        all.insert(all.end(), pool.begin(), pool.end());
        const auto feats = build_feature_vectors(ds, spec, all, FeatureMode::cross_cluster);
        const WeightVector w = solve_penalized_sc(
            {feats.front(), {feats.begin() + 1, feats.end()}, lam}, opts);
        for (int t : ds.post_times()) {
          double fitted = 0.0;
          for (std::size_t j = 0; j < pool.size(); ++j)
            fitted += w.weights(static_cast<Eigen::Index>(j)) * ds.value(pool[j], "y", t);
          const double r = ds.value(unit, "y", t) - fitted;
          ss += r * r;
        }
      }
      expected.push_back(std::sqrt(ss / (ds.n_post_periods() * static_cast<double>(included))));
    }
    REQUIRE(report.curve.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
      CHECK(report.curve[i].rmspe == doctest::Approx(expected[i]).epsilon(1e-12));
    const std::size_t argmin =
        static_cast<std::size_t>(std::min_element(expected.begin(), expected.end()) -
                                 expected.begin());
    CHECK(lambda == grid.values[argmin]);
    CHECK(report.chosen_rmspe ==
          std::min_element(report.curve.begin(), report.curve.end(),
                           [](const CvCurvePoint& a, const CvCurvePoint& b) {
                             return a.rmspe < b.rmspe;
                           })->rmspe);
  }
}

TEST_CASE("within-cluster CV") {
  SUBCASE("identical twins make the fit exact") {
    PanelBuilder pb;
    pb.treated = "t";
    pb.series("t", "A", "y", {1, 2, 3, 4});
    pb.series("b", "A", "y", {2, 4, 5, 6});
    pb.series("c", "A", "y", {2, 4, 5, 6});
    pb.series("x", "B", "y", {0, 0, 0, 0});
    pb.series("z", "B", "y", {1, 1, 1, 1});
    const PanelDataset ds = pb.build();
    const auto [lambda, report] = cv_lambda_star(ds, {"y", {}}, uniform_grid(4));
    CHECK(lambda == 0.25);
    for (const auto& pt : report.curve) CHECK(pt.rmspe < 1e-10);
  }
  SUBCASE("two-candidate grid matches hand enumeration") {
    PanelBuilder pb;
    pb.treated = "t";
    pb.series("t", "A", "y", {9, 9, 9, 9});
    pb.series("b", "A", "y", {1, 2, 1, 2});
    pb.series("c", "A", "y", {2, 2, 4, 5});
    pb.series("x", "B", "y", {0, 0, 0, 0});
    pb.series("z", "B", "y", {1, 1, 1, 1});
    const PanelDataset ds = pb.build();
    LambdaGrid grid;
    grid.values = {0.3, 0.9};
    const auto [lambda, report] = cv_lambda_star(ds, {"y", {}}, grid);

    // Each pseudo target has a single donor (its sibling), so the residuals
    // do not depend on lambda: b vs c gives (-3, -3) and (3, 3).
    const double expected = std::sqrt((9.0 * 4) / (2.0 * 2.0));
    CHECK(report.curve[0].rmspe == doctest::Approx(expected));
    CHECK(report.curve[1].rmspe == doctest::Approx(expected));
    CHECK(lambda == 0.3);
  }
  SUBCASE("a two-unit treated cluster cannot cross-validate lambda star") {
    const PanelDataset ds = pscg_test::small_panel();
    CHECK_THROWS_WITH_AS(cv_lambda_star(ds, {"y", {}}, uniform_grid(2)),
                         doctest::Contains("within-cluster CV undefined"), Error);
  }
}

TEST_CASE("repeated runs are bit-identical") {
  const PanelDataset ds = two_type_panel();
  const FeatureSpec spec{"y", {}};
  const MatchResult matches = build_match_sets(ds, spec, 2);
  const LambdaGrid grid = uniform_grid(7);
  const auto [l1, r1] = cv_lambda_cross(ds, spec, matches, CvTarget::neighbors, grid);
  const auto [l2, r2] = cv_lambda_cross(ds, spec, matches, CvTarget::neighbors, grid);
  CHECK(l1 == l2);
  REQUIRE(r1.curve.size() == r2.curve.size());
  for (std::size_t i = 0; i < r1.curve.size(); ++i)
    CHECK(r1.curve[i].rmspe == r2.curve[i].rmspe);
}

TEST_CASE("scaling the panel scales the RMSPE curve and keeps the argmin") {
  auto build = [](double scale) {
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> u(1.0, 9.0);
    PanelBuilder pb;
    pb.treated = "a1";
    for (const auto& [cluster, unit] :
         std::vector<std::pair<std::string, std::string>>{{"A", "a1"}, {"A", "a2"},
                                                          {"B", "b1"}, {"B", "b2"},
                                                          {"C", "c1"}, {"C", "c2"}}) {
      std::vector<double> y(5);
      for (auto& v : y) v = scale * u(rng);
      pb.series(unit, cluster, "y", y);
    }
    return pb.build();
  };
  const PanelDataset base = build(1.0);
  const PanelDataset scaled = build(3.0);
  const FeatureSpec spec{"y", {}};
  const LambdaGrid grid = uniform_grid(5);
  const auto [l1, r1] =
      cv_lambda_cross(base, spec, build_match_sets(base, spec, 2), CvTarget::neighbors, grid);
  const auto [l2, r2] =
      cv_lambda_cross(scaled, spec, build_match_sets(scaled, spec, 2), CvTarget::neighbors, grid);
  CHECK(l1 == l2);
  for (std::size_t i = 0; i < r1.curve.size(); ++i)
    CHECK(r2.curve[i].rmspe == doctest::Approx(3.0 * r1.curve[i].rmspe).epsilon(1e-9));
}

TEST_CASE("cross-validation fails loudly when every pseudo unit is skipped") {
  PanelBuilder pb;
  pb.treated = "a1";
  pb.series("a1", "A", "y", {1, 2, 3, 4});
  pb.series("a2", "A", "y", {2, 3, 4, 5});
  pb.series("b1", "B", "y", {1, 2, 3, 4});
  pb.series("b2", "B", "y", {2, 3, 4, 5});
  const PanelDataset ds = pb.build();
  const FeatureSpec spec{"y", {}};
  const MatchResult matches = build_match_sets(ds, spec, 1);
  CHECK_THROWS_WITH_AS(cv_lambda_cross(ds, spec, matches, CvTarget::neighbors, uniform_grid(3)),
                       doctest::Contains("skipped"), Error);
}

TEST_CASE("skipped pseudo units leave the normalizer but are reported") {
  // Controls split between one big cluster and one pair; matches land in both
  // clusters for the treated anchor but the pair's pseudo units keep donors.
  PanelBuilder pb;
  pb.treated = "a1";
  pb.series("a1", "A", "y", {1, 2, 3, 4});
  pb.series("a2", "A", "y", {5, 6, 7, 8});
  pb.series("b1", "B", "y", {1.1, 2.1, 3, 4});
  pb.series("b2", "B", "y", {5.1, 6.1, 7, 8});
  pb.series("c1", "C", "y", {0.9, 1.9, 3.2, 4.2});
  pb.series("c2", "C", "y", {4.9, 5.9, 6.8, 7.8});
  const PanelDataset ds = pb.build();
  const FeatureSpec spec{"y", {}};
  const MatchResult matches = build_match_sets(ds, spec, 2);
  const auto [lambda, report] =
      cv_lambda_cross(ds, spec, matches, CvTarget::neighbors, uniform_grid(3));
  CHECK(lambda > 0.0);
  int skipped = 0;
  for (const auto& d : report.details) skipped += d.skipped ? 1 : 0;
  CHECK(skipped == 0);  // both clusters represented, nobody skipped
}

TEST_CASE("pseudo-unit enumeration order cannot change the curves") {
  auto build = [](bool reversed) {
    std::vector<std::pair<std::string, std::vector<double>>> series{
        {"a1", {1, 2, 3, 4}},     {"a2", {5, 6, 7, 8}},     {"b1", {1.2, 2.2, 3.1, 4.1}},
        {"b2", {4.8, 5.8, 7.2, 8.2}}, {"c1", {0.8, 1.8, 2.9, 3.9}}, {"c2", {5.2, 6.2, 6.8, 7.8}}};
    if (reversed) std::reverse(series.begin(), series.end());
    PanelBuilder pb;
    pb.treated = "a1";
    for (const auto& [unit, values] : series)
      pb.series(unit, std::string(1, static_cast<char>(std::toupper(unit[0]))), "y", values);
    return pb.build();
  };
  const FeatureSpec spec{"y", {}};
  const LambdaGrid grid = uniform_grid(4);
  const PanelDataset d1 = build(false), d2 = build(true);
  const auto [l1, r1] = cv_lambda_cross(d1, spec, build_match_sets(d1, spec, 2),
                                        CvTarget::neighbors, grid);
  const auto [l2, r2] = cv_lambda_cross(d2, spec, build_match_sets(d2, spec, 2),
                                        CvTarget::neighbors, grid);
  CHECK(l1 == l2);
  for (std::size_t i = 0; i < r1.curve.size(); ++i)
    CHECK(r1.curve[i].rmspe == r2.curve[i].rmspe);
}

TEST_CASE("penalty terms outside (0, 1] are rejected") {
  PenaltyConfig p{0.5, 0.5, 0.5, 0, ""};
  CHECK_NOTHROW(p.check());
  p.lambda_neighbors = 0.0;
  CHECK_THROWS_AS(p.check(), Error);
  p.lambda_neighbors = 1.5;
  CHECK_THROWS_AS(p.check(), Error);
}
