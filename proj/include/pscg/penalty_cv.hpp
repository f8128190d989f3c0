#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pscg/matching.hpp"
#include "pscg/panel.hpp"
#include "pscg/solver.hpp"

namespace pscg {

struct LambdaGrid {
  std::vector<double> values;  // ascending
  std::string description;
};

// The canonical candidate set: 10000 uniform values on (0, 1].
LambdaGrid default_grid();
// {k/n : k = 1..n}.
LambdaGrid uniform_grid(int n);
// n log-spaced values from lo to 1.
LambdaGrid log_uniform_grid(int n, double lo = 1e-4);

// The three selected penalty terms plus grid metadata.
struct PenaltyConfig {
  double lambda_treated = 0.0;    // treated unit's cross-cluster solve
  double lambda_neighbors = 0.0;  // shared by the treated cluster's neighbors
  double lambda_star = 0.0;       // within-cluster solve
  int grid_size = 0;              // 0 when fixed externally
  std::string grid_description;

  void check() const;
};

struct CvCurvePoint {
  double lambda = 0.0;
  double rmspe = 0.0;
};

struct CvPseudoUnitDetail {
  std::string unit;
  bool skipped = false;
  std::string reason;
  // At the chosen lambda:
  double rmspe = 0.0;
  std::vector<double> residuals;  // post periods, ascending time
};

struct CvReport {
  std::string criterion;  // "treated", "neighbors" or "star"
  std::vector<CvCurvePoint> curve;
  double chosen_lambda = 0.0;
  double chosen_rmspe = 0.0;
  std::vector<CvPseudoUnitDetail> details;
  std::vector<std::string> warnings;
};

enum class CvTarget { treated, neighbors };

// Leave-one-out cross-validation on post-treatment outcomes of matched
// control units: every matched control takes a turn as pseudo-treated, is
// synthesized from matched controls outside its own cluster, and the pooled
// post-period RMSPE is minimized over the grid. Ties choose the smaller
// lambda. Pseudo units whose donor pool is empty are skipped with a warning
// and leave the normalizer.
std::pair<double, CvReport> cv_lambda_cross(const PanelDataset& ds, const FeatureSpec& spec,
                                            const MatchResult& matches, CvTarget which,
                                            const LambdaGrid& grid,
                                            bool standardize = false);

// Same scheme within the treated cluster: each untreated unit is synthesized
// from the other untreated units on unit-level features. Requires at least
// two untreated units.
std::pair<double, CvReport> cv_lambda_star(const PanelDataset& ds, const FeatureSpec& spec,
                                           const LambdaGrid& grid, bool standardize = false);

// Pooled RMSPE: sqrt(sum of squared residuals / (n_post * n_units)).
double pooled_rmspe(double squared_residual_sum, int n_units, int n_post);

}  // namespace pscg
