#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace codistillery {

/// Dense row-major array of doubles. Rank 0 (shape {}) is a scalar.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  /// Throws DimensionError when data.size() != product(shape) or a dim is 0.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  /// Rows / columns of a rank-2 tensor. A vector is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const double* ptr() const noexcept { return data_.data(); }
  double* ptr() noexcept { return data_.data(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double item() const;

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  /// Rows [begin, end) of a rank-2 tensor.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::string shape_string(const Tensor::Shape& shape);

/// Bitwise equality of shape and payload (distinguishes -0 from +0 and
/// compares NaN payloads); this is the notion used by determinism tests.
bool bit_equal(const Tensor& a, const Tensor& b);

bool all_finite(const Tensor& t);

// Non-differentiable operations, backed by the active kernel table.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Stack rank-2 tensors with equal column counts vertically.
Tensor concat_rows(std::span<const Tensor> parts);

/// a += b, in place.
void add_inplace(Tensor& a, const Tensor& b);
/// y += alpha * x, in place.
void axpy_inplace(double alpha, const Tensor& x, Tensor& y);

/// Left-to-right sum over the flat buffer.
double sum(const Tensor& t);
double sum(std::span<const double> values);
double squared_norm(const Tensor& t);

/// Sum of `values` viewed as rows of `row_len` entries. With rows_per_block
/// == 0 (or >= the row count) this is the plain left-to-right sum. Otherwise
/// each block of rows is summed left-to-right from +0 and the block partials
/// are then added left-to-right from +0; this reproduces, exactly, the order
/// in which sharded devices' partial results are combined.
double blocked_sum(std::span<const double> values, std::size_t row_len,
                   std::size_t rows_per_block);

}  // namespace codistillery
