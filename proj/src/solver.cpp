#include "pscg/solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pscg {

namespace {

void check_finite(const Eigen::VectorXd& v, const std::string& what) {
  require(v.allFinite(), what + " contains NaN or Inf");
}

// Primal active-set method for min w'(G + r I)w - 2 b'w + lambda d'w over
// the simplex. The ridge r makes the reduced Hessian positive definite, so
// every equality-constrained subproblem has a unique solution and the
// iteration terminates at the KKT point.
Eigen::VectorXd active_set_simplex_qp(const Eigen::MatrixXd& gram, const Eigen::VectorXd& cross,
                                      const Eigen::VectorXd& lin, const SolverOptions& opts,
                                      Eigen::VectorXd w, int* iterations_out) {
  const Eigen::Index n = gram.rows();
  const double gram_scale = std::max(1.0, gram.diagonal().maxCoeff());
  const double ridge = opts.min_norm_ridge * gram_scale;

  Eigen::MatrixXd hess = 2.0 * gram;
  hess.diagonal().array() += 2.0 * ridge;
  const Eigen::VectorXd grad0 = -2.0 * cross + lin;

  const double tol = opts.stationarity_tol *
                     std::max({1.0, hess.cwiseAbs().maxCoeff(), grad0.cwiseAbs().maxCoeff()});
  // Weights live on the simplex, so subproblem feasibility is absolute.
  const double tol_w = 1e-12;

  std::vector<bool> free(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) free[static_cast<std::size_t>(i)] = w(i) > 0.0;

  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    std::vector<Eigen::Index> s;
    for (Eigen::Index i = 0; i < n; ++i)
      if (free[static_cast<std::size_t>(i)]) s.push_back(i);
    const Eigen::Index ns = static_cast<Eigen::Index>(s.size());

    // Equality-constrained subproblem on the free set:
    // H_SS x - nu 1 = -g_S, 1'x = 1.
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(ns + 1, ns + 1);
    Eigen::VectorXd rhs(ns + 1);
    for (Eigen::Index a = 0; a < ns; ++a) {
      for (Eigen::Index b = 0; b < ns; ++b) kkt(a, b) = hess(s[a], s[b]);
      kkt(a, ns) = -1.0;
      kkt(ns, a) = 1.0;
      rhs(a) = -grad0(s[a]);
    }
    rhs(ns) = 1.0;
    const Eigen::VectorXd sol = Eigen::PartialPivLU<Eigen::MatrixXd>(kkt).solve(rhs);
    const double nu = sol(ns);

    double min_x = std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < ns; ++a) min_x = std::min(min_x, sol(a));

    if (min_x >= -tol_w) {
      for (Eigen::Index a = 0; a < ns; ++a) w(s[a]) = std::max(sol(a), 0.0);
      for (Eigen::Index i = 0; i < n; ++i)
        if (!free[static_cast<std::size_t>(i)]) w(i) = 0.0;
      // Multipliers of the clamped bounds.
      const Eigen::VectorXd grad = hess * w + grad0;
      Eigen::Index worst = -1;
      double worst_mu = -tol;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (free[static_cast<std::size_t>(i)]) continue;
        const double mu = grad(i) - nu;
        if (mu < worst_mu) {
          worst_mu = mu;
          worst = i;
        }
      }
      if (worst < 0) break;  // KKT point
      free[static_cast<std::size_t>(worst)] = true;
      continue;
    }

    // Step toward the subproblem optimum until the first weight hits zero.
    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index a = 0; a < ns; ++a) {
      if (sol(a) < 0.0 && w(s[a]) > sol(a)) {
        const double step = w(s[a]) / (w(s[a]) - sol(a));
        if (step < alpha) {
          alpha = step;
          blocking = s[a];
        }
      }
    }
    for (Eigen::Index a = 0; a < ns; ++a) w(s[a]) += alpha * (sol(a) - w(s[a]));
    if (blocking >= 0) {
      w(blocking) = 0.0;
      free[static_cast<std::size_t>(blocking)] = false;
    }
  }
  if (iterations_out) *iterations_out = iter;
  return w;
}

}  // namespace

PreparedProblem::PreparedProblem(Eigen::MatrixXd donors, Eigen::VectorXd target)
    : donors_(std::move(donors)), target_(std::move(target)) {
  require(donors_.cols() >= 1, "empty donor pool");
  require(donors_.rows() == target_.size(), "donor/target dimensions differ");
  check_finite(target_, "target");
  require(donors_.allFinite(), "donors contain NaN or Inf");
  gram_ = donors_.transpose() * donors_;
  cross_ = donors_.transpose() * target_;
  sq_dist_.resize(donors_.cols());
  for (Eigen::Index j = 0; j < donors_.cols(); ++j)
    sq_dist_(j) = (target_ - donors_.col(j)).squaredNorm();
}

WeightVector PreparedProblem::solve(double lambda, const SolverOptions& opts) const {
  require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be finite and >= 0");
  const Eigen::Index n = donors_.cols();

  WeightVector out;
  if (n == 1) {
    out.weights = Eigen::VectorXd::Ones(1);
  } else {
    const Eigen::VectorXd lin = lambda * sq_dist_;
    // Start at the nearest-neighbor vertex.
    Eigen::Index nn = 0;
    sq_dist_.minCoeff(&nn);
    Eigen::VectorXd start = Eigen::VectorXd::Zero(n);
    start(nn) = 1.0;
    out.weights = active_set_simplex_qp(gram_, cross_, lin, opts, start, &out.iterations);

    if (opts.check_uniqueness) {
      const Eigen::VectorXd alt = active_set_simplex_qp(
          gram_, cross_, lin, opts, Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)),
          nullptr);
      out.unique_within_tol = (out.weights - alt).cwiseAbs().maxCoeff() <= 1e-6;
    }
  }

  // Simplex feasibility within tolerance, then exact clamp/renormalize.
  require(out.weights.minCoeff() >= -1e-9, "solver produced a negative weight");
  out.weights = out.weights.cwiseMax(0.0);
  const double sum = out.weights.sum();
  require(std::abs(sum - 1.0) <= 1e-9, "solver weights do not sum to 1");
  out.weights /= sum;

  out.fit_term = (target_ - donors_ * out.weights).squaredNorm();
  out.penalty_term = sq_dist_.dot(out.weights);
  out.objective_value = out.fit_term + lambda * out.penalty_term;
  return out;
}

namespace {

Eigen::MatrixXd pack_donors(const FeatureVector& target, const std::vector<FeatureVector>& donors) {
  require(!donors.empty(), "empty donor pool");
  Eigen::MatrixXd m(target.values.size(), static_cast<Eigen::Index>(donors.size()));
  for (std::size_t j = 0; j < donors.size(); ++j) {
    require(same_layout(target, donors[j]),
            "donor " + donors[j].owner + " does not share the target's feature layout");
    require(donors[j].values.size() == target.values.size(), "feature lengths differ");
    m.col(static_cast<Eigen::Index>(j)) = donors[j].values;
  }
  return m;
}

}  // namespace

WeightVector solve_penalized_sc(const SolveProblem& p, const SolverOptions& opts) {
  PreparedProblem prep(pack_donors(p.target, p.donors), p.target.values);
  return prep.solve(p.lambda, opts);
}

WeightVector solve_unpenalized_sc(const FeatureVector& target,
                                  const std::vector<FeatureVector>& donors,
                                  const SolverOptions& opts) {
  return solve_penalized_sc({target, donors, 0.0}, opts);
}

WeightVector nearest_neighbor_weights(const FeatureVector& target,
                                      const std::vector<FeatureVector>& donors) {
  const Eigen::MatrixXd m = pack_donors(target, donors);
  check_finite(target.values, "target");
  require(m.allFinite(), "donors contain NaN or Inf");
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double d = (target.values - m.col(j)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  WeightVector out;
  out.weights = Eigen::VectorXd::Zero(m.cols());
  out.weights(best) = 1.0;
  out.fit_term = best_d;
  out.penalty_term = best_d;
  out.objective_value = best_d;  // lambda = 0 convention
  return out;
}

WeightVector grid_oracle_raw(const Eigen::MatrixXd& donors, const Eigen::VectorXd& target,
                             double lambda, double resolution) {
  require(resolution > 0.0, "grid oracle resolution must be > 0");
  require(donors.cols() >= 1, "empty donor pool");
  require(donors.cols() <= 4, "grid oracle supports at most 4 donors");
  require(donors.rows() == target.size(), "donor/target dimensions differ");
  require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be finite and >= 0");

  const Eigen::Index n = donors.cols();
  const long steps = std::max(1L, std::lround(1.0 / resolution));

  Eigen::VectorXd sq_dist(n);
  for (Eigen::Index j = 0; j < n; ++j) sq_dist(j) = (target - donors.col(j)).squaredNorm();

  Eigen::VectorXd w(n), best_w(n);
  double best_obj = std::numeric_limits<double>::infinity();

  // Lexicographic enumeration of lattice points (c_1,...,c_n), sum = steps.
  std::vector<long> counts(static_cast<std::size_t>(n), 0);
  auto evaluate = [&]() {
    for (Eigen::Index j = 0; j < n; ++j)
      w(j) = static_cast<double>(counts[static_cast<std::size_t>(j)]) /
             static_cast<double>(steps);
    const double fit = (target - donors * w).squaredNorm();
    const double pen = sq_dist.dot(w);
    const double obj = fit + lambda * pen;
    if (obj < best_obj) {
      best_obj = obj;
      best_w = w;
    }
  };
  auto recurse = [&](auto&& self, Eigen::Index pos, long remaining) -> void {
    if (pos == n - 1) {
      counts[static_cast<std::size_t>(pos)] = remaining;
      evaluate();
      return;
    }
    for (long c = 0; c <= remaining; ++c) {
      counts[static_cast<std::size_t>(pos)] = c;
      self(self, pos + 1, remaining - c);
    }
  };
  recurse(recurse, 0, steps);

  WeightVector out;
  out.weights = best_w;
  out.fit_term = (target - donors * best_w).squaredNorm();
  out.penalty_term = sq_dist.dot(best_w);
  out.objective_value = out.fit_term + lambda * out.penalty_term;
  return out;
}

WeightVector grid_oracle(const SolveProblem& p, double resolution) {
  return grid_oracle_raw(pack_donors(p.target, p.donors), p.target.values, p.lambda, resolution);
}

std::vector<FeatureVector> standardize_dimensions(const std::vector<FeatureVector>& vectors) {
  if (vectors.empty()) return {};
  const Eigen::Index dims = vectors.front().values.size();
  const double n = static_cast<double>(vectors.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dims);
  for (const auto& v : vectors) mean += v.values;
  mean /= n;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dims);
  for (const auto& v : vectors) var += (v.values - mean).cwiseAbs2();
  var /= std::max(1.0, n - 1.0);

  Eigen::VectorXd scale(dims);
  for (Eigen::Index i = 0; i < dims; ++i)
    scale(i) = var(i) > 0.0 ? 1.0 / std::sqrt(var(i)) : 1.0;

  std::vector<FeatureVector> out = vectors;
  for (auto& v : out) v.values = v.values.cwiseProduct(scale);
  return out;
}

}  // namespace pscg
