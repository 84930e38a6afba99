#include "illcond/spectral/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "illcond/errors.hpp"

namespace illcond::spectral {
namespace {

double column_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void rotate(std::vector<double>& p, std::vector<double>& q, double c, double s) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double xp = p[i], xq = q[i];
    p[i] = c * xp - s * xq;
    q[i] = s * xp + c * xq;
  }
}

// Jacobi on a tall (rows >= cols) matrix given as columns.
Svd tall_svd(std::vector<std::vector<double>> cols, std::size_t rows, int max_sweeps) {
  const std::size_t n = cols.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

  constexpr double tol = 1e-15;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = column_dot(cols[p], cols[p]);
        const double beta = column_dot(cols[q], cols[q]);
        const double gamma = column_dot(cols[p], cols[q]);
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(cols[p], cols[q], c, s);
        rotate(v[p], v[q], c, s);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(column_dot(cols[j], cols[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  std::vector<double> u_vals(rows * n, 0.0), v_vals(n * n, 0.0), singular(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    singular[k] = sigma[j];
    if (sigma[j] > 0.0) {
      for (std::size_t i = 0; i < rows; ++i) u_vals[i * n + k] = cols[j][i] / sigma[j];
    }
    // v[j] holds column j of V as a contiguous vector.
    for (std::size_t i = 0; i < n; ++i) v_vals[i * n + k] = v[j][i];
  }
  return Svd{Tensor::matrix(rows, n, std::move(u_vals)), std::move(singular),
             Tensor::matrix(n, n, std::move(v_vals))};
}

}  // namespace

Tensor Svd::reconstruct() const {
  const std::size_t m = u.rows(), n = v.rows(), r = singular.size();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t k = 0; k < r; ++k) {
    const double s = singular[k];
    if (s == 0.0) continue;
    for (std::size_t i = 0; i < m; ++i) {
      const double us = u.at(i, k) * s;
      if (us == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += us * v.at(j, k);
    }
  }
  return Tensor::matrix(m, n, std::move(out));
}

Svd jacobi_svd(const Tensor& w, int max_sweeps) {
  if (w.rank() != 2) throw ShapeError("svd needs a 2-D tensor, got " + diffcore::shape_string(w.shape()));
  const std::size_t m = w.rows(), n = w.cols();
  const bool tall = m >= n;
  const std::size_t rows = tall ? m : n, ncols = tall ? n : m;
  std::vector<std::vector<double>> cols(ncols, std::vector<double>(rows));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (tall) cols[j][i] = w.at(i, j);
      else cols[i][j] = w.at(i, j);
    }
  Svd s = tall_svd(std::move(cols), rows, max_sweeps);
  if (!tall) std::swap(s.u, s.v);
  return s;
}

SvdExtremes svd_extremes(const std::vector<double>& singular, std::size_t rows, std::size_t cols) {
  SvdExtremes e;
  if (singular.empty()) return e;
  e.sigma_max = *std::max_element(singular.begin(), singular.end());
  const double rank_tol = static_cast<double>(std::max(rows, cols)) * e.sigma_max * 1e-12;
  e.sigma_min = 0.0;
  for (double s : singular) {
    if (s > rank_tol) {
      ++e.rank;
      e.sigma_min = e.sigma_min == 0.0 ? s : std::min(e.sigma_min, s);
    }
  }
  e.ratio = e.rank ? e.sigma_max / e.sigma_min : 0.0;
  e.kappa_infinite = e.rank < cols;
  e.kappa = e.kappa_infinite ? std::numeric_limits<double>::infinity() : e.ratio;
  return e;
}

SvdExtremes svd_extremes(const Tensor& w) {
  if (w.rank() != 2) throw ShapeError("svd_extremes needs a 2-D tensor, got " + diffcore::shape_string(w.shape()));
  return svd_extremes(jacobi_svd(w).singular, w.rows(), w.cols());
}

}  // namespace illcond::spectral
