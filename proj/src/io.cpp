#include "pscg/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace pscg {

std::string format_sig6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  // Normalize the sign of zero so reruns are byte-identical.
  if (std::string(buf) == "-0") return "0";
  return buf;
}

std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

IngestResult ingest_panel(const std::string& path, std::vector<std::string> outcome_variables,
                          std::vector<std::string> covariate_variables,
                          const std::string& treated_unit, int t0) {
  std::ifstream in(path);
  require(in.good(), "cannot open panel file: " + path);

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty panel file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "unit_id,cluster_id,time,variable,value",
          "bad header in " + path + ": expected unit_id,cluster_id,time,variable,value");

  std::vector<PanelObservation> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = " at row " + std::to_string(line_no);
    require(fields.size() == 5, "expected 5 fields" + where);
    PanelObservation obs;
    obs.unit = fields[0];
    obs.cluster = fields[1];
    require(!obs.unit.empty() && !obs.cluster.empty(), "empty unit or cluster id" + where);
    try {
      std::size_t used = 0;
      obs.time = std::stoi(fields[2], &used);
      require(used == fields[2].size(), "bad time");
    } catch (const std::exception&) {
      fail("unparsable time '" + fields[2] + "'" + where);
    }
    obs.variable = fields[3];
    require(!obs.variable.empty(), "empty variable name" + where);
    try {
      std::size_t used = 0;
      obs.value = std::stod(fields[4], &used);
      require(used == fields[4].size(), "bad value");
    } catch (const std::exception&) {
      fail("unparsable value '" + fields[4] + "'" + where);
    }
    rows.push_back(std::move(obs));
  }
  require(!rows.empty(), "panel file has no data rows: " + path);

  // Detect duplicate keys here so the error can name file rows.
  {
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string key =
          rows[i].unit + "\x1f" + rows[i].variable + "\x1f" + std::to_string(rows[i].time);
      auto [it, inserted] = seen.emplace(key, i);
      require(inserted, "duplicate key (" + rows[i].unit + ", " + rows[i].variable + ", " +
                            std::to_string(rows[i].time) + ") at row " + std::to_string(i + 2) +
                            " (first at row " + std::to_string(it->second + 2) + ")");
    }
  }

  IngestResult result{PanelDataset::create(rows, std::move(outcome_variables),
                                           std::move(covariate_variables), treated_unit, t0),
                      rows.size()};
  return result;
}

void emit_panel(const PanelDataset& ds, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write panel file: " + path);
  out << "unit_id,cluster_id,time,variable,value\n";
  for (const auto& r : ds.to_rows())
    out << r.unit << ',' << r.cluster << ',' << r.time << ',' << r.variable << ','
        << format_full(r.value) << '\n';
  require(out.good(), "write failed: " + path);
}

}  // namespace pscg
