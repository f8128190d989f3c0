#pragma once

#include <map>
#include <string>
#include <vector>

#include "pscg/panel.hpp"

namespace pscg_test {

// Declarative mini-panel builder: series start at time 1 and must all share
// one length.
struct PanelBuilder {
  std::vector<pscg::PanelObservation> rows;
  std::vector<std::string> outcomes{"y"};
  std::vector<std::string> covariates;
  std::string treated;
  int t0 = 2;

  PanelBuilder& series(const std::string& unit, const std::string& cluster,
                       const std::string& variable, const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i)
      rows.push_back({unit, cluster, static_cast<int>(i) + 1, variable, values[i]});
    return *this;
  }

  pscg::PanelDataset build() const {
    return pscg::PanelDataset::create(rows, outcomes, covariates, treated, t0);
  }
};

// Treated cluster {a (treated), b}; control clusters {c, d} and {e, f};
// one outcome, 2 pre + 2 post periods. Values are small integers so hand
// arithmetic stays exact.
inline pscg::PanelDataset small_panel() {
  PanelBuilder pb;
  pb.treated = "a";
  pb.series("a", "A", "y", {1, 2, 3, 4});
  pb.series("b", "A", "y", {2, 3, 4, 5});
  pb.series("c", "B", "y", {1, 2, 2, 3});
  pb.series("d", "B", "y", {3, 4, 5, 6});
  pb.series("e", "C", "y", {0, 1, 1, 2});
  pb.series("f", "C", "y", {2, 2, 3, 3});
  return pb.build();
}

inline pscg::FeatureVector make_feature(const std::string& owner, std::vector<double> values) {
  pscg::FeatureVector fv;
  fv.owner = owner;
  fv.values = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  auto layout = std::make_shared<pscg::FeatureLayout>();
  for (std::size_t i = 0; i < values.size(); ++i)
    layout->push_back({pscg::FeatureRole::unit_outcome, "y", static_cast<int>(i) + 1});
  fv.layout = layout;
  return fv;
}

}  // namespace pscg_test
