#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace i2v::report {

// Writes to a temporary sibling and renames it over the target, so readers
// never observe a partially written file.
void write_atomic(const std::filesystem::path& path, const std::string& content);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// Fixed-precision number formatting shared by every CSV file.
std::string fmt(double v);

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const;
};

struct Series {
  std::string name;
  std::vector<double> values;
};

// Cells without a value are drawn hatched grey.
std::string svg_heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels,
                        const std::vector<std::vector<std::optional<double>>>& cells, double lo, double hi);
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::vector<Series>& series);
std::string svg_bar_plot(const std::string& title, const std::vector<Series>& series);

}  // namespace i2v::report
