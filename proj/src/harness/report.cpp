#include "illcond/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "illcond/errors.hpp"
#include "illcond/models/io.hpp"

namespace illcond::harness {

std::string csv_field(std::string_view f) {
  if (f.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(f);
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  return out + "\r\n";
}

std::vector<std::string> parse_csv_row(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw EvaluationError(tmp.string() + ": cannot open for writing");
    out << content;
    if (!out.flush()) throw EvaluationError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw ConfigError("quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Summary summarize_distribution(const std::vector<double>& values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  return s;
}

BoxGeometry box_geometry(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("box plot of an empty series");
  BoxGeometry b{quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75), 0, 0, {}};
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr, hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_lo = b.q1;
  b.whisker_hi = b.q3;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      b.outliers.push_back(v);
    } else {
      b.whisker_lo = std::min(b.whisker_lo, v);
      b.whisker_hi = std::max(b.whisker_hi, v);
    }
  }
  std::sort(b.outliers.begin(), b.outliers.end());
  return b;
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

}  // namespace

std::string boxplot_svg(const std::vector<BoxplotSeries>& series, std::string_view title) {
  if (series.empty()) throw ConfigError("box plot needs at least one series");
  std::vector<BoxGeometry> boxes;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series) {
    boxes.push_back(box_geometry(s.values));
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double slot = 60.0, left = 70.0, top = 40.0, plot_h = 300.0;
  const double width = left + slot * static_cast<double>(series.size()) + 20.0;
  const double height = top + plot_h + 120.0;
  auto y = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(title) << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << num(top + plot_h)
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    svg << "<line x1=\"" << left - 4 << "\" y1=\"" << num(y(v)) << "\" x2=\"" << left << "\" y2=\"" << num(y(v))
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << left - 6 << "\" y=\"" << num(y(v) + 4) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const BoxGeometry& b = boxes[i];
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    const double half = slot * 0.3;
    svg << "<g class=\"box\" data-q1=\"" << num(b.q1) << "\" data-median=\"" << num(b.median) << "\" data-q3=\""
        << num(b.q3) << "\">\n";
    svg << "<line x1=\"" << num(cx) << "\" y1=\"" << num(y(b.whisker_hi)) << "\" x2=\"" << num(cx) << "\" y2=\""
        << num(y(b.q3)) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << num(cx) << "\" y1=\"" << num(y(b.q1)) << "\" x2=\"" << num(cx) << "\" y2=\""
        << num(y(b.whisker_lo)) << "\" stroke=\"black\"/>\n";
    for (double w : {b.whisker_lo, b.whisker_hi}) {
      svg << "<line x1=\"" << num(cx - half / 2) << "\" y1=\"" << num(y(w)) << "\" x2=\"" << num(cx + half / 2)
          << "\" y2=\"" << num(y(w)) << "\" stroke=\"black\"/>\n";
    }
    svg << "<rect x=\"" << num(cx - half) << "\" y=\"" << num(y(b.q3)) << "\" width=\"" << num(2 * half)
        << "\" height=\"" << num(std::max(0.0, y(b.q1) - y(b.q3))) << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << num(cx - half) << "\" y1=\"" << num(y(b.median)) << "\" x2=\"" << num(cx + half)
        << "\" y2=\"" << num(y(b.median)) << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    for (double o : b.outliers) {
      svg << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(y(o)) << "\" r=\"2\" fill=\"none\" stroke=\"black\"/>\n";
    }
    svg << "<text transform=\"translate(" << num(cx + 4) << "," << num(top + plot_h + 10)
        << ") rotate(60)\">" << xml_escape(series[i].label) << "</text>\n";
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_boxplot_svg(const std::vector<BoxplotSeries>& series, const std::filesystem::path& path,
                      std::string_view title) {
  atomic_write(path, boxplot_svg(series, title));
}

}  // namespace illcond::harness
