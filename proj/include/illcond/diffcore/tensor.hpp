#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace illcond::diffcore {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// A rank-0 tensor (empty shape) is a scalar. Construction rejects shapes
/// with zero extents, size mismatches and non-finite values; the mutable
/// accessors exist for kernels and optimizers and do not re-check.
class Tensor {
 public:
  Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  /// Row/column counts of a rank-2 tensor. A rank-1 tensor is one row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> data() noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

  /// The single value of a size-1 tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  Tensor transposed() const;
  /// Rows [begin, end) of a rank-2 tensor, as a rank-2 tensor.
  Tensor row_range(std::size_t begin, std::size_t end) const;
  /// Row r of a rank-2 tensor, as a rank-1 tensor.
  Tensor row(std::size_t r) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// Stack equally sized rank-1 tensors into a [count, width] matrix.
Tensor stack_rows(std::span<const Tensor> rows);

double l2_norm(std::span<const double> v);
double linf_norm(std::span<const double> v);

}  // namespace illcond::diffcore
