#include "illcond/diffcore/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "illcond/errors.hpp"

namespace illcond::diffcore {

Tensor finite_diff_gradient(const ScalarFn& fn, const Tensor& point, double h) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  Tensor probe = point;
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x = point[i];
    probe[i] = x + h;
    const double up = fn(probe);
    probe[i] = x - h;
    const double down = fn(probe);
    probe[i] = x;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw EvaluationError("finite difference probe at coordinate " + std::to_string(i) +
                            " returned a non-finite value");
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return Tensor(point.shape(), std::move(grad));
}

double relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (a.size() != b.size()) throw ShapeError("relative_error: size mismatch");
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

}  // namespace illcond::diffcore
