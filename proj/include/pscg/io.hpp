#pragma once

#include <string>
#include <vector>

#include "pscg/panel.hpp"

namespace pscg {

struct IngestResult {
  PanelDataset dataset;
  std::size_t data_rows = 0;
};

// Parses a long-format panel CSV with the header
// unit_id,cluster_id,time,variable,value and validates the PanelDataset
// invariants. Schema violations name the offending row.
IngestResult ingest_panel(const std::string& path, std::vector<std::string> outcome_variables,
                          std::vector<std::string> covariate_variables,
                          const std::string& treated_unit, int t0);

// Lossless long-format export; ingest(emit(ds)) reproduces the dataset
// exactly.
void emit_panel(const PanelDataset& ds, const std::string& path);

// Number formatting used across emitted artifacts: derived tables print 6
// significant digits, dataset exports keep full precision.
std::string format_sig6(double v);
std::string format_full(double v);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace pscg
