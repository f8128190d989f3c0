#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "pscg/panel.hpp"

namespace pscg {

// One penalized synthetic-control weight problem: synthesize `target` from
// convex combinations of `donors`, trading aggregate fit against
// weight-weighted squared distances to the individual donors.
struct SolveProblem {
  FeatureVector target;
  std::vector<FeatureVector> donors;
  double lambda = 0.0;
};

struct SolverOptions {
  int max_iterations = 10000;
  double stationarity_tol = 1e-10;
  // Tiny Tikhonov term on the weights; keeps the reduced Hessian positive
  // definite and resolves lambda=0 non-uniqueness toward the minimum-norm
  // optimum. Scaled by the Gram magnitude internally.
  double min_norm_ridge = 1e-10;
  // Re-solve from a second starting vertex and flag disagreements.
  bool check_uniqueness = true;
};

struct WeightVector {
  Eigen::VectorXd weights;     // aligned with donor order; >= 0, sums to 1
  double objective_value = 0;  // fit_term + lambda * penalty_term
  double fit_term = 0;         // || target - sum_j w_j donor_j ||^2
  double penalty_term = 0;     // sum_j w_j || target - donor_j ||^2
  bool unique_within_tol = true;
  int iterations = 0;
};

// Quadratic form of a fixed (donors, target) pair, reusable across penalty
// values; this is what grid searches over lambda call in their inner loop.
class PreparedProblem {
 public:
  // donors: one column per donor.
  PreparedProblem(Eigen::MatrixXd donors, Eigen::VectorXd target);

  WeightVector solve(double lambda, const SolverOptions& opts = {}) const;
  Eigen::Index donor_count() const { return donors_.cols(); }
  const Eigen::VectorXd& squared_distances() const { return sq_dist_; }

 private:
  Eigen::MatrixXd donors_;
  Eigen::VectorXd target_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd cross_;
  Eigen::VectorXd sq_dist_;
};

// Minimizes ||target - sum_j w_j donor_j||^2 + lambda * sum_j w_j ||target -
// donor_j||^2 over the probability simplex. lambda = 0 recovers the classical
// synthetic-control fit (minimum-norm weights among optima); lambda -> inf
// approaches one-nearest-neighbor matching.
WeightVector solve_penalized_sc(const SolveProblem& p, const SolverOptions& opts = {});

// solve_penalized_sc with lambda = 0.
WeightVector solve_unpenalized_sc(const FeatureVector& target,
                                  const std::vector<FeatureVector>& donors,
                                  const SolverOptions& opts = {});

// Weight 1 on the donor nearest to the target; ties go to the lowest index.
WeightVector nearest_neighbor_weights(const FeatureVector& target,
                                      const std::vector<FeatureVector>& donors);

// Exhaustive evaluation of the objective on the simplex lattice with the
// given resolution; independent of the solver path, intended as a test
// oracle. Donor count must be at most 4.
WeightVector grid_oracle(const SolveProblem& p, double resolution);
WeightVector grid_oracle_raw(const Eigen::MatrixXd& donors, const Eigen::VectorXd& target,
                             double lambda, double resolution);

// Divides every feature dimension by its standard deviation across the given
// vectors (dimensions with zero spread are left unscaled). Optional
// preprocessing behind a config flag; off by default everywhere.
std::vector<FeatureVector> standardize_dimensions(const std::vector<FeatureVector>& vectors);

}  // namespace pscg
