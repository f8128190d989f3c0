#include "pscg/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace pscg {

namespace {

std::string zero_pad(int value, int width) {
  std::ostringstream os;
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

std::vector<double> resolve_profile(const std::vector<double>& profile, int n_post,
                                    const std::string& name) {
  if (profile.empty()) return std::vector<double>(static_cast<std::size_t>(n_post), 0.0);
  if (profile.size() == 1) return std::vector<double>(static_cast<std::size_t>(n_post), profile[0]);
  require(profile.size() == static_cast<std::size_t>(n_post),
          "infeasible spec: " + name + " profile must have 1 or n_post entries");
  return profile;
}

}  // namespace

std::pair<PanelDataset, SimTruth> generate_synthetic_panel(const SimSpec& spec,
                                                           std::uint64_t seed) {
  require(spec.cluster_sizes.size() >= 2, "infeasible spec: need at least 2 clusters");
  require(spec.cluster_sizes[0] >= 2, "infeasible spec: treated cluster size < 2");
  for (int s : spec.cluster_sizes) require(s >= 1, "infeasible spec: empty cluster");
  require(spec.n_pre >= 2 && spec.n_post >= 1, "infeasible spec: need 2 pre and 1 post period");
  require(spec.n_outcomes >= 1, "infeasible spec: need an outcome variable");
  require(spec.n_factors >= 0 && spec.noise_sd >= 0.0, "infeasible spec: bad factor model");

  const int n_clusters = static_cast<int>(spec.cluster_sizes.size());
  const int n1 = spec.cluster_sizes[0];
  const int n_periods = spec.n_pre + spec.n_post;
  const int n_vars = spec.n_outcomes + spec.n_covariates;
  const int n_load = 1 + spec.n_factors;  // intercept + factors

  std::vector<int> parents;
  if (spec.planted_weights) {
    for (int k = 1; k < n_clusters; ++k)
      if (spec.cluster_sizes[static_cast<std::size_t>(k)] == n1) parents.push_back(k);
    require(parents.size() >= 2,
            "infeasible spec: planted weights need two control clusters of the treated "
            "cluster's size");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Common factors, AR(1).
  std::vector<std::vector<double>> factors(static_cast<std::size_t>(spec.n_factors));
  for (auto& f : factors) {
    f.resize(static_cast<std::size_t>(n_periods));
    double prev = spec.factor_sd * gauss(rng);
    for (int t = 0; t < n_periods; ++t) {
      f[static_cast<std::size_t>(t)] = prev;
      prev = spec.factor_ar * prev + spec.factor_sd * gauss(rng);
    }
  }

  // Loadings (intercept first), indexed [cluster][unit][var][dim].
  std::vector<std::vector<std::vector<std::vector<double>>>> load(
      static_cast<std::size_t>(n_clusters));
  for (int k = 0; k < n_clusters; ++k) {
    const int nk = spec.cluster_sizes[static_cast<std::size_t>(k)];
    load[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(nk));
    for (int i = 0; i < nk; ++i) {
      auto& unit_load = load[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
      unit_load.resize(static_cast<std::size_t>(n_vars));
      for (int v = 0; v < n_vars; ++v) {
        auto& lv = unit_load[static_cast<std::size_t>(v)];
        lv.resize(static_cast<std::size_t>(n_load));
        lv[0] = spec.intercept_min + (spec.intercept_max - spec.intercept_min) * unif(rng);
        for (int r = 1; r < n_load; ++r)
          lv[static_cast<std::size_t>(r)] =
              spec.loading_min + (spec.loading_max - spec.loading_min) * unif(rng);
      }
    }
  }

  if (spec.planted_weights) {
    // One Dirichlet(1) mixture over cluster mates; the parents' first units
    // become that mixture of their own mates, so the within-cluster synthesis
    // of the treated unit is exact with the same weights.
    std::vector<double> eta(static_cast<std::size_t>(n1 - 1));
    double eta_sum = 0.0;
    for (auto& e : eta) {
      e = -std::log(std::max(unif(rng), 1e-300));
      eta_sum += e;
    }
    for (auto& e : eta) e /= eta_sum;

    // Parent mixture with a floor, so no parent cluster dominates and the
    // matched sets stay spread across clusters.
    std::vector<double> theta(parents.size());
    double theta_sum = 0.0;
    for (auto& t : theta) {
      t = 0.5 + unif(rng);
      theta_sum += t;
    }
    for (auto& t : theta) t /= theta_sum;

    for (int parent : parents) {
      auto& pc = load[static_cast<std::size_t>(parent)];
      for (int v = 0; v < n_vars; ++v)
        for (int r = 0; r < n_load; ++r) {
          double mix = 0.0;
          for (int i = 1; i < n1; ++i)
            mix += eta[static_cast<std::size_t>(i - 1)] *
                   pc[static_cast<std::size_t>(i)][static_cast<std::size_t>(v)]
                     [static_cast<std::size_t>(r)];
          pc[0][static_cast<std::size_t>(v)][static_cast<std::size_t>(r)] = mix;
        }
    }
    for (int i = 0; i < n1; ++i)
      for (int v = 0; v < n_vars; ++v)
        for (int r = 0; r < n_load; ++r) {
          double mix = 0.0;
          for (std::size_t p = 0; p < parents.size(); ++p)
            mix += theta[p] * load[static_cast<std::size_t>(parents[p])]
                                  [static_cast<std::size_t>(i)][static_cast<std::size_t>(v)]
                                  [static_cast<std::size_t>(r)];
          load[0][static_cast<std::size_t>(i)][static_cast<std::size_t>(v)]
              [static_cast<std::size_t>(r)] = mix;
        }
  }

  SimTruth truth;
  truth.tau = resolve_profile(spec.tau, spec.n_post, "tau");
  truth.delta = resolve_profile(spec.delta, spec.n_post, "delta");
  truth.gamma = spec.gamma.empty() ? truth.delta : resolve_profile(spec.gamma, spec.n_post, "gamma");
  for (int t = spec.n_pre + 1; t <= n_periods; ++t) truth.post_times.push_back(t);

  const int cluster_width = static_cast<int>(std::to_string(n_clusters).size());
  const int unit_width = static_cast<int>(
      std::to_string(*std::max_element(spec.cluster_sizes.begin(), spec.cluster_sizes.end()))
          .size());
  auto cluster_name = [&](int k) { return "c" + zero_pad(k + 1, cluster_width); };
  auto unit_name = [&](int k, int i) {
    return cluster_name(k) + "u" + zero_pad(i + 1, unit_width);
  };
  auto variable_name = [&](int v) {
    return v < spec.n_outcomes ? "y" + std::to_string(v + 1)
                               : "x" + std::to_string(v - spec.n_outcomes + 1);
  };

  std::vector<PanelObservation> rows;
  rows.reserve(static_cast<std::size_t>(n_periods) * n_vars * 64);
  const std::string treated = unit_name(0, 0);

  for (int k = 0; k < n_clusters; ++k) {
    const int nk = spec.cluster_sizes[static_cast<std::size_t>(k)];
    for (int i = 0; i < nk; ++i) {
      for (int v = 0; v < n_vars; ++v) {
        const auto& lv = load[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]
                             [static_cast<std::size_t>(v)];
        for (int t = 1; t <= n_periods; ++t) {
          double y = lv[0];
          for (int r = 0; r < spec.n_factors; ++r)
            y += lv[static_cast<std::size_t>(r + 1)] *
                 factors[static_cast<std::size_t>(r)][static_cast<std::size_t>(t - 1)];
          y += spec.noise_sd * gauss(rng);

          const bool is_outcome = v < spec.n_outcomes;
          if (k == 0 && is_outcome)
            truth.latent[variable_name(v)][unit_name(k, i)].push_back(y);

          if (is_outcome && k == 0 && t > spec.n_pre) {
            const std::size_t post_idx = static_cast<std::size_t>(t - spec.n_pre - 1);
            if (i == 0)
              y += truth.tau[post_idx];
            else
              y += truth.delta[post_idx];
          }
          rows.push_back({unit_name(k, i), cluster_name(k), t, variable_name(v), y});
        }
      }
    }
  }

  std::vector<std::string> outcomes, covariates;
  for (int v = 0; v < spec.n_outcomes; ++v) outcomes.push_back(variable_name(v));
  for (int v = spec.n_outcomes; v < n_vars; ++v) covariates.push_back(variable_name(v));

  PanelDataset ds = PanelDataset::create(rows, outcomes, covariates, treated, spec.n_pre);
  return {std::move(ds), std::move(truth)};
}

}  // namespace pscg
