#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "illcond/models/autoencoder.hpp"
#include "illcond/spectral/svd.hpp"

namespace illcond::spectral {

struct LayerConditioning {
  std::size_t layer_index = 0;  // 0-based position in the layer stack
  std::size_t rows = 0;
  std::size_t cols = 0;
  SvdExtremes extremes;
};

/// One entry per layer weight, in layer order. Variational heads are
/// reported at their full [mu || logvar] width.
std::vector<LayerConditioning> model_conditioning_report(const models::AutoencoderModel& model);

/// CSV with header layer_index,rows,cols,sigma_max,sigma_min,kappa,kappa_infinite_flag.
/// kappa is written as "inf" when flagged.
void write_report_csv(std::ostream& out, const std::vector<LayerConditioning>& report);

struct GradientHistogram {
  std::vector<double> edges;          // bins + 1, strictly increasing
  std::vector<std::size_t> counts;    // bins
  std::size_t underflow = 0;
  std::size_t overflow = 0;
  std::size_t sample_count = 0;
  double excess_kurtosis = 0.0;
  /// True when every sample is identical, so kurtosis is undefined.
  bool degenerate = false;
};

/// Histogram of pooled gradient samples over [lo, hi) in `bins` equal bins
/// (hi itself lands in the last bin). Kurtosis covers every sample,
/// including those outside the range.
GradientHistogram gradient_histogram(std::span<const double> samples, std::size_t bins, double lo, double hi);

/// Population excess kurtosis m4 / m2^2 - 3; NaN for constant samples.
double excess_kurtosis(std::span<const double> samples);

/// CSV with header bin_lo,bin_hi,count; under/overflow rows use -inf/inf edges.
void write_histogram_csv(std::ostream& out, const GradientHistogram& h);

}  // namespace illcond::spectral
