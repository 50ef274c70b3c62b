#pragma once

#include <string>
#include <vector>

#include "core/common.hpp"

namespace ddtau {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(std::initializer_list<double> values) {
    rows.emplace_back(values);
  }
};

// Deterministic CSV with round-trippable doubles (%.17g).
std::string to_csv(const Table& t);
Table csv_parse(const std::string& text);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Minimal static line plot; log-log axes optional. Output is well-formed XML.
std::string svg_line_plot(const std::string& title, const std::string& xlabel,
                          const std::string& ylabel,
                          const std::vector<Series>& series, bool log_x = false,
                          bool log_y = false);

void write_text_file(const std::string& path, const std::string& content);

// least-squares slope of y against x
double fit_slope(const std::vector<std::pair<double, double>>& xy);

}  // namespace ddtau
