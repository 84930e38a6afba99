#pragma once

#include <vector>

#include "illcond/diffcore/tensor.hpp"

namespace illcond::spectral {

using diffcore::Tensor;

/// Thin singular value decomposition W = U diag(s) V^T with
/// r = min(rows, cols) triples, singular values in descending order.
struct Svd {
  Tensor u;                     // [rows, r]
  std::vector<double> singular; // r values, descending
  Tensor v;                     // [cols, r]

  /// U diag(s) V^T.
  Tensor reconstruct() const;
};

/// One-sided (Hestenes) Jacobi SVD. Columns belonging to zero singular
/// values are left as zero vectors in U.
Svd jacobi_svd(const Tensor& w, int max_sweeps = 80);

/// Largest and smallest non-zero singular values and the condition number.
///
/// Singular values at or below rank_tol = max(rows, cols) * sigma_max * 1e-12
/// count as zero. kappa is infinite iff the numerical rank is below the
/// column count; ratio = sigma_max / sigma_min_nonzero is always reported
/// (0 for the zero matrix).
struct SvdExtremes {
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double kappa = 0.0;
  bool kappa_infinite = false;
  double ratio = 0.0;
  std::size_t rank = 0;
};

SvdExtremes svd_extremes(const Tensor& w);
SvdExtremes svd_extremes(const std::vector<double>& singular, std::size_t rows, std::size_t cols);

}  // namespace illcond::spectral
