#include "illcond/spectral/report.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "illcond/errors.hpp"
#include "illcond/models/io.hpp"

namespace illcond::spectral {

using models::format_double;

std::vector<LayerConditioning> model_conditioning_report(const models::AutoencoderModel& model) {
  std::vector<LayerConditioning> out;
  out.reserve(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Tensor& w = model.layers[i].weight;
    out.push_back({i, w.rows(), w.cols(), svd_extremes(w)});
  }
  return out;
}

void write_report_csv(std::ostream& out, const std::vector<LayerConditioning>& report) {
  out << "layer_index,rows,cols,sigma_max,sigma_min,kappa,kappa_infinite_flag\n";
  for (const auto& r : report) {
    const auto& e = r.extremes;
    out << r.layer_index << ',' << r.rows << ',' << r.cols << ',' << format_double(e.sigma_max) << ','
        << format_double(e.sigma_min) << ',' << (e.kappa_infinite ? std::string("inf") : format_double(e.kappa))
        << ',' << (e.kappa_infinite ? 1 : 0) << '\n';
  }
}

double excess_kurtosis(std::span<const double> samples) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : samples) {
    const double d = (v - mean) * (v - mean);
    m2 += d;
    m4 += d * d;
  }
  m2 /= n;
  m4 /= n;
  if (m2 == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return m4 / (m2 * m2) - 3.0;
}

GradientHistogram gradient_histogram(std::span<const double> samples, std::size_t bins, double lo, double hi) {
  if (samples.empty()) throw ConfigError("gradient histogram needs at least one sample");
  if (bins == 0) throw ConfigError("gradient histogram needs at least one bin");
  if (!(lo < hi)) throw ConfigError("gradient histogram range must satisfy lo < hi");
  GradientHistogram h;
  h.edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + width * static_cast<double>(i);
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double v : samples) {
    if (v < lo) {
      ++h.underflow;
    } else if (v > hi) {
      ++h.overflow;
    } else {
      auto b = static_cast<std::size_t>((v - lo) / width);
      ++h.counts[std::min(b, bins - 1)];
    }
  }
  h.sample_count = samples.size();
  h.excess_kurtosis = excess_kurtosis(samples);
  h.degenerate = std::isnan(h.excess_kurtosis);
  return h;
}

void write_histogram_csv(std::ostream& out, const GradientHistogram& h) {
  out << "bin_lo,bin_hi,count\n";
  out << "-inf," << format_double(h.edges.front()) << ',' << h.underflow << '\n';
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out << format_double(h.edges[i]) << ',' << format_double(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
  }
  out << format_double(h.edges.back()) << ",inf," << h.overflow << '\n';
}

}  // namespace illcond::spectral
