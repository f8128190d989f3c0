#pragma once

#include <Eigen/Core>

#include <map>
#include <string>
#include <vector>

#include "pscg/panel.hpp"

namespace pscg {

// sqrt((x-y)' sigma_inv (x-y)). sigma_inv must be symmetric PSD of matching
// dimension; tiny negative quadratic forms from roundoff are clamped to zero.
double mahalanobis_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            const Eigen::MatrixXd& sigma_inv);

struct CovarianceAtTime {
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd inverse;  // Moore-Penrose pseudo-inverse
};

// Sample covariance (N-1 denominator) of the given rows (units x dims),
// with its pseudo-inverse (singular values below 1e-10 relative to the
// largest are treated as zero).
CovarianceAtTime covariance_of_rows(const Eigen::MatrixXd& rows);

// Single-period feature row of one unit: unit outcome, neighborhood outcome,
// unit covariates, neighborhood covariates, all at time t.
Eigen::VectorXd per_period_feature_row(const PanelDataset& ds, const FeatureSpec& spec,
                                       const std::string& unit, int t);

// Covariance of the per-period feature rows across units. Units in singleton
// clusters have no neighborhood block and contribute no row.
CovarianceAtTime covariance_at_time(const PanelDataset& ds, const FeatureSpec& spec, int t);

struct RankedMatch {
  std::string unit;
  double distance = 0.0;
};

// Matched donor set of one treated-cluster anchor unit.
struct MatchSet {
  std::string anchor;
  std::vector<std::string> matched;                 // ascending unit ids, never treated-cluster
  std::map<int, std::vector<RankedMatch>> per_period;  // full ranking per pre period
};

struct MatchResult {
  std::map<std::string, MatchSet> by_anchor;  // every treated-cluster unit
  std::vector<std::string> h_treated;         // matches of the treated unit
  std::vector<std::string> h_union;           // union over the untreated anchors
};

// For every unit of the treated cluster, ranks control units by Mahalanobis
// distance on per-period rows and keeps the m nearest per pre period; the
// matched set is the union over pre periods. Ties broken by ascending unit
// id. Control units in singleton clusters are not eligible.
MatchResult build_match_sets(const PanelDataset& ds, const FeatureSpec& spec, int m);

}  // namespace pscg
