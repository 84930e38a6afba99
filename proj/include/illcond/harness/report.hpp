#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace illcond::harness {

/// RFC-4180 field quoting: fields with a comma, quote, CR or LF are quoted
/// and inner quotes doubled.
std::string csv_field(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);

/// Split one RFC-4180 record (no embedded newlines across calls).
std::vector<std::string> parse_csv_row(std::string_view line);

/// Write through a temp file in the same directory, then rename over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);

/// Linear interpolation between order statistics: position (n - 1) * p.
double quantile(std::vector<double> values, double p);

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

Summary summarize_distribution(const std::vector<double>& values);

struct BoxplotSeries {
  std::string label;
  std::vector<double> values;
};

struct BoxGeometry {
  double q1, median, q3;
  double whisker_lo, whisker_hi;  // most extreme data within 1.5 IQR
  std::vector<double> outliers;
};

BoxGeometry box_geometry(const std::vector<double>& values);

/// Static SVG box plot, one box per series.
std::string boxplot_svg(const std::vector<BoxplotSeries>& series, std::string_view title);
void emit_boxplot_svg(const std::vector<BoxplotSeries>& series, const std::filesystem::path& path,
                      std::string_view title = "Output distortion");

}  // namespace illcond::harness
