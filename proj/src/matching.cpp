#include "pscg/matching.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>

namespace pscg {

double mahalanobis_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            const Eigen::MatrixXd& sigma_inv) {
  require(x.size() == y.size(), "mahalanobis: vector dimensions differ");
  require(sigma_inv.rows() == sigma_inv.cols() && sigma_inv.rows() == x.size(),
          "mahalanobis: matrix dimension mismatch");
  const double scale = std::max(1.0, sigma_inv.cwiseAbs().maxCoeff());
  require((sigma_inv - sigma_inv.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale,
          "mahalanobis: matrix is not symmetric");
  const Eigen::VectorXd d = x - y;
  double q = d.dot(sigma_inv * d);
  if (q < 0.0) {
    require(q >= -1e-8 * scale * std::max(1.0, d.squaredNorm()),
            "mahalanobis: matrix is not positive semi-definite");
    q = 0.0;
  }
  return std::sqrt(q);
}

CovarianceAtTime covariance_of_rows(const Eigen::MatrixXd& rows) {
  require(rows.rows() >= 2, "covariance needs at least 2 rows");
  const Eigen::Index n = rows.rows();
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  CovarianceAtTime out;
  out.covariance = centered.transpose() * centered / static_cast<double>(n - 1);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.covariance,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? 1e-10 * sv(0) : 0.0;
  Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff && sv(i) > 0.0) inv_sv(i) = 1.0 / sv(i);
  out.inverse = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

Eigen::VectorXd per_period_feature_row(const PanelDataset& ds, const FeatureSpec& spec,
                                       const std::string& unit, int t) {
  check_feature_spec(ds, spec);
  const std::size_t p = spec.covariates.size();
  Eigen::VectorXd row(static_cast<Eigen::Index>(2 + 2 * p));
  Eigen::Index k = 0;
  row(k++) = ds.value(unit, spec.outcome, t);
  row(k++) = neighborhood_average(ds, unit, spec.outcome, t);
  for (const auto& c : spec.covariates) row(k++) = ds.value(unit, c, t);
  for (const auto& c : spec.covariates) row(k++) = neighborhood_average(ds, unit, c, t);
  return row;
}

namespace {

std::vector<std::string> non_singleton_units(const PanelDataset& ds) {
  std::vector<std::string> out;
  for (const auto& u : ds.units())
    if (ds.cluster_units(u.cluster).size() >= 2) out.push_back(u.id);
  return out;
}

}  // namespace

CovarianceAtTime covariance_at_time(const PanelDataset& ds, const FeatureSpec& spec, int t) {
  require(t <= ds.t0(), "covariance_at_time expects a pre-treatment period");
  const auto units = non_singleton_units(ds);
  require(units.size() >= 2, "covariance needs at least 2 units");
  const Eigen::Index dims = static_cast<Eigen::Index>(2 + 2 * spec.covariates.size());
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(units.size()), dims);
  for (std::size_t i = 0; i < units.size(); ++i)
    rows.row(static_cast<Eigen::Index>(i)) = per_period_feature_row(ds, spec, units[i], t);
  return covariance_of_rows(rows);
}

MatchResult build_match_sets(const PanelDataset& ds, const FeatureSpec& spec, int m) {
  require(m >= 1, "match count m must be >= 1");
  check_feature_spec(ds, spec);

  std::vector<std::string> controls;
  for (const auto& u : non_singleton_units(ds))
    if (ds.cluster_of(u) != ds.treated_cluster()) controls.push_back(u);
  require(static_cast<int>(controls.size()) >= m,
          "m=" + std::to_string(m) + " exceeds the " + std::to_string(controls.size()) +
              " available control units");

  const auto pre = ds.pre_times();
  const auto anchors = ds.cluster_units(ds.treated_cluster());

  // Per-period rows and covariance inverses are shared across anchors.
  std::map<int, Eigen::MatrixXd> sigma_inv;
  std::map<int, std::map<std::string, Eigen::VectorXd>> rows;
  for (int t : pre) {
    sigma_inv[t] = covariance_at_time(ds, spec, t).inverse;
    for (const auto& u : non_singleton_units(ds))
      rows[t][u] = per_period_feature_row(ds, spec, u, t);
  }

  MatchResult result;
  std::set<std::string> h_union, h_treated;
  for (const auto& anchor : anchors) {
    MatchSet ms;
    ms.anchor = anchor;
    std::set<std::string> matched;
    for (int t : pre) {
      std::vector<RankedMatch> ranked;
      ranked.reserve(controls.size());
      for (const auto& c : controls)
        ranked.push_back({c, mahalanobis_distance(rows[t][anchor], rows[t][c], sigma_inv[t])});
      std::stable_sort(ranked.begin(), ranked.end(), [](const RankedMatch& a, const RankedMatch& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.unit < b.unit;
      });
      for (int k = 0; k < m; ++k) matched.insert(ranked[static_cast<std::size_t>(k)].unit);
      ms.per_period[t] = std::move(ranked);
    }
    ms.matched.assign(matched.begin(), matched.end());
    if (anchor == ds.treated_unit())
      h_treated.insert(matched.begin(), matched.end());
    else
      h_union.insert(matched.begin(), matched.end());
    result.by_anchor.emplace(anchor, std::move(ms));
  }
  result.h_treated.assign(h_treated.begin(), h_treated.end());
  result.h_union.assign(h_union.begin(), h_union.end());
  return result;
}

}  // namespace pscg
