#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spo {

/// Numeric table read from a metrics CSV; empty or non-numeric cells are NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(std::istream& in);

struct PlotOptions {
  std::string x = "step";
  std::vector<std::string> y{"kl_opt"};
  bool log_y = false;
  std::string title;
  int width = 720;
  int height = 420;
};

/// Static SVG line chart, one polyline per y column.
void render_svg(std::ostream& out, const CsvTable& table, const PlotOptions& options);

}  // namespace spo
