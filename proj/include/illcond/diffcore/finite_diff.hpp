#pragma once

#include <functional>

#include "illcond/diffcore/tensor.hpp"

namespace illcond::diffcore {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient (fn(x + h e_i) - fn(x - h e_i)) / 2h.
///
/// Throws ConfigError for h <= 0 and EvaluationError when fn returns a
/// non-finite value at any probe point.
Tensor finite_diff_gradient(const ScalarFn& fn, const Tensor& point, double h = 1e-5);

/// max_i |a_i - b_i| / max(|a|_inf, |b|_inf, floor). The floor keeps an
/// all-zero pair from dividing by zero.
double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-12);

}  // namespace illcond::diffcore
