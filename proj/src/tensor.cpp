#include "codistillery/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "codistillery/errors.hpp"
#include "codistillery/kernels.hpp"

namespace codistillery {
namespace {

std::size_t product(const Tensor::Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void check_dims(const Tensor::Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_dims(shape_);
  if (data_.size() != product(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() <= 1) return 1;
  throw DimensionError("rows() on rank-" + std::to_string(rank()) + " tensor");
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  if (rank() == 0) return 1;
  throw DimensionError("cols() on rank-" + std::to_string(rank()) + " tensor");
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (rank() != 2 || begin >= end || end > shape_[0]) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                         shape_string(shape_));
  }
  const std::size_t c = shape_[1];
  return Tensor(Shape{end - begin, c},
                std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                    data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

std::string shape_string(const Tensor::Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(double)) == 0;
}

bool all_finite(const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out(a.shape());
  kernels::active().add(a.ptr(), b.ptr(), out.ptr(), a.size());
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Tensor out(a.shape());
  kernels::active().sub(a.ptr(), b.ptr(), out.ptr(), a.size());
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  kernels::active().mul(a.ptr(), b.ptr(), out.ptr(), a.size());
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  kernels::active().scale(a.ptr(), s, out.ptr(), a.size());
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  kernels::active().relu(a.ptr(), out.ptr(), a.size());
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out({m, n});
  kernels::active().gemm(a.ptr(), b.ptr(), out.ptr(), m, k, n);
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose of " + shape_string(a.shape()));
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  std::vector<double> data;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.cols() != c) throw DimensionError("concat_rows: column mismatch");
    r += p.rows();
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  return Tensor({r, c}, std::move(data));
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same(a, b, "add_inplace");
  kernels::active().add(a.ptr(), b.ptr(), a.ptr(), a.size());
}

void axpy_inplace(double alpha, const Tensor& x, Tensor& y) {
  require_same(x, y, "axpy");
  kernels::active().axpy(alpha, x.ptr(), y.ptr(), x.size());
}

double sum(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s = s + v;
  return s;
}

double sum(const Tensor& t) { return sum(t.data()); }

double squared_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s = s + v * v;
  return s;
}

double blocked_sum(std::span<const double> values, std::size_t row_len, std::size_t rows_per_block) {
  if (row_len == 0 || values.size() % row_len != 0) {
    throw DimensionError("blocked_sum: length not a multiple of row length");
  }
  const std::size_t rows = values.size() / row_len;
  if (rows_per_block == 0 || rows_per_block >= rows) return sum(values);
  double total = 0.0;
  for (std::size_t r0 = 0; r0 < rows; r0 += rows_per_block) {
    const std::size_t r1 = std::min(rows, r0 + rows_per_block);
    total = total + sum(values.subspan(r0 * row_len, (r1 - r0) * row_len));
  }
  return total;
}

}  // namespace codistillery
