#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pscg/panel.hpp"

namespace pscg {

// Recipe for a simulated clustered panel. Control outcomes follow a low-rank
// factor model shared across clusters (per-unit intercept plus n_factors
// AR(1) common factors with unit-specific loadings, plus iid noise). With
// planted_weights, every control cluster of the treated cluster's size acts
// as a parent (at least two required): each treated-cluster unit's loadings
// are one fixed convex mixture of the parents' corresponding units, and each
// parent's first unit is a fixed convex mixture of its cluster mates, so
// exact synthetic weights exist for both the cross-cluster and the
// within-cluster problems.
struct SimSpec {
  std::vector<int> cluster_sizes = {6, 6, 6, 6, 5, 4, 3, 3, 2, 2, 2};  // [0] = treated cluster
  int n_pre = 2;
  int n_post = 8;
  int n_outcomes = 2;
  int n_covariates = 0;
  int n_factors = 1;
  double factor_ar = 0.6;
  double factor_sd = 0.4;
  double loading_min = 0.25;
  double loading_max = 1.0;
  double intercept_min = 2.0;
  double intercept_max = 4.0;
  double noise_sd = 0.02;
  bool planted_weights = true;
  // Per post period; size 1 broadcasts, empty means zero. Applied to every
  // outcome variable. gamma is recorded as ground truth only (the panel can
  // not carry it); empty defaults to delta, the value implied by the
  // symmetric-spillover construction.
  std::vector<double> tau;
  std::vector<double> delta;
  std::vector<double> gamma;
};

struct SimTruth {
  std::vector<int> post_times;
  std::vector<double> tau;
  std::vector<double> delta;
  std::vector<double> gamma;
  // Pre-injection outcome series of the treated cluster's units:
  // latent[variable][unit][time index over all periods].
  std::map<std::string, std::map<std::string, std::vector<double>>> latent;
};

std::pair<PanelDataset, SimTruth> generate_synthetic_panel(const SimSpec& spec,
                                                           std::uint64_t seed);

}  // namespace pscg
