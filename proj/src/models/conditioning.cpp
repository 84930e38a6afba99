#include "illcond/models/conditioning.hpp"

#include <cmath>

#include "illcond/errors.hpp"
#include "illcond/spectral/svd.hpp"

namespace illcond::models {

AutoencoderModel inject_ill_conditioning(const AutoencoderModel& model, std::size_t layer_index,
                                         double sigma_floor, std::size_t count) {
  model.validate();
  if (layer_index >= model.layers.size()) {
    throw ConfigError("layer index " + std::to_string(layer_index) + " out of range for " +
                      std::to_string(model.layers.size()) + " layers");
  }
  if (!(sigma_floor > 0.0) || !std::isfinite(sigma_floor)) throw ConfigError("sigma floor must be positive");
  AutoencoderModel out = model;
  if (count == 0) return out;

  const Tensor& w = model.layers[layer_index].weight;
  spectral::Svd svd = spectral::jacobi_svd(w);
  if (count > svd.singular.size()) {
    throw ConfigError("cannot floor " + std::to_string(count) + " singular values of a " +
                      std::to_string(w.rows()) + "x" + std::to_string(w.cols()) + " weight");
  }
  const std::size_t r = svd.singular.size();
  for (std::size_t k = r - count; k < r; ++k) svd.singular[k] = sigma_floor;

  // Zero singular values leave zero columns in U; fill them so the floored
  // directions are actually realized.
  if (svd.u.rows() >= r) {
    for (std::size_t k = r - count; k < r; ++k) {
      double norm = 0.0;
      for (std::size_t i = 0; i < svd.u.rows(); ++i) norm += svd.u.at(i, k) * svd.u.at(i, k);
      if (norm > 0.0) continue;
      // Gram-Schmidt a standard basis vector against the existing columns.
      for (std::size_t e = 0; e < svd.u.rows(); ++e) {
        std::vector<double> c(svd.u.rows(), 0.0);
        c[e] = 1.0;
        for (std::size_t j = 0; j < r; ++j) {
          if (j == k) continue;
          double d = 0.0;
          for (std::size_t i = 0; i < c.size(); ++i) d += c[i] * svd.u.at(i, j);
          for (std::size_t i = 0; i < c.size(); ++i) c[i] -= d * svd.u.at(i, j);
        }
        double n2 = 0.0;
        for (double x : c) n2 += x * x;
        if (n2 > 1e-6) {
          for (std::size_t i = 0; i < c.size(); ++i) svd.u.at(i, k) = c[i] / std::sqrt(n2);
          break;
        }
      }
    }
  }
  out.layers[layer_index].weight = svd.reconstruct();
  return out;
}

}  // namespace illcond::models
