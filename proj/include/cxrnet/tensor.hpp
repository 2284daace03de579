#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "cxrnet/errors.hpp"
#include "cxrnet/gemm.hpp"

namespace cxrnet {

/// Tensor extents, rank 1 to 4. Externally visible rank-4 shapes follow the
/// batch, height, width, channels axis order.
class Shape {
 public:
  Shape() = default;

  Shape(std::initializer_list<std::int64_t> dims) {
    if (dims.size() < 1 || dims.size() > 4) {
      throw ShapeError("shape rank must be 1..4, got " + std::to_string(dims.size()));
    }
    rank_ = static_cast<int>(dims.size());
    int i = 0;
    for (std::int64_t d : dims) {
      if (d < 1) throw ShapeError("shape extent must be >= 1, got " + std::to_string(d));
      dim_[i++] = d;
    }
  }

  int rank() const { return rank_; }

  std::int64_t operator[](int axis) const { return dim_[static_cast<std::size_t>(axis)]; }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= dim_[static_cast<std::size_t>(i)];
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (dim_[static_cast<std::size_t>(i)] != o.dim_[static_cast<std::size_t>(i)]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < rank_; ++i) {
      if (i) os << ", ";
      os << dim_[static_cast<std::size_t>(i)];
    }
    os << ")";
    return os.str();
  }

 private:
  std::array<std::int64_t, 4> dim_{1, 1, 1, 1};
  int rank_ = 0;
};

/// Dense row-major tensor over float or double. Values are owned; copying a
/// tensor copies its buffer. Construction and the documented operations keep
/// shape/data-length consistent and reject non-finite results.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor requires a floating-point type");

 public:
  Tensor() = default;

  explicit Tensor(const Shape& shape) : shape_(shape), data_(static_cast<std::size_t>(shape.numel()), T(0)) {}

  Tensor(const Shape& shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str() + " element count " + std::to_string(shape_.numel()));
    }
  }

  static Tensor full(const Shape& shape, T value) {
    Tensor t(shape);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& operator()(std::int64_t i, std::int64_t j) {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  const T& operator()(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  T& operator()(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) {
    return data_[static_cast<std::size_t>(((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c)];
  }
  const T& operator()(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const {
    return data_[static_cast<std::size_t>(((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c)];
  }

  /// Same flat data under a new shape with equal element count.
  Tensor reshaped(const Shape& shape) const& {
    check_reshape(shape);
    Tensor t;
    t.shape_ = shape;
    t.data_ = data_;
    return t;
  }
  Tensor reshaped(const Shape& shape) && {
    check_reshape(shape);
    Tensor t;
    t.shape_ = shape;
    t.data_ = std::move(data_);
    return t;
  }

  bool all_finite() const {
    for (const T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  void check_reshape(const Shape& shape) const {
    if (shape.numel() != numel()) {
      throw ShapeError("reshape " + shape_.str() + " -> " + shape.str() + " changes element count");
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
void ensure_finite(const Tensor<T>& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
}

template <typename T>
void ensure_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

template <typename T, typename F>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, F&& f, const char* op) {
  ensure_same_shape(a, b, op);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  ensure_finite(out, op);
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, [](T x, T y) { return x + y; }, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, [](T x, T y) { return x - y; }, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, [](T x, T y) { return x * y; }, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * s;
  ensure_finite(out, "scale");
  return out;
}

/// Per-channel broadcast over the last axis: out[..., c] = x[..., c] + v[c].
/// The only broadcast the layers need (bias add, batchnorm shift).
template <typename T>
Tensor<T> add_channels(const Tensor<T>& x, const Tensor<T>& v) {
  const std::int64_t ch = x.shape()[x.shape().rank() - 1];
  if (v.shape().rank() != 1 || v.shape()[0] != ch) {
    throw ShapeError("add_channels: vector length " + v.shape().str() + " does not match channel count " +
                     std::to_string(ch));
  }
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T* pv = v.data();
  T* po = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] + pv[i % ch];
  ensure_finite(out, "add_channels");
  return out;
}

template <typename T>
Tensor<T> mul_channels(const Tensor<T>& x, const Tensor<T>& v) {
  const std::int64_t ch = x.shape()[x.shape().rank() - 1];
  if (v.shape().rank() != 1 || v.shape()[0] != ch) {
    throw ShapeError("mul_channels: vector length " + v.shape().str() + " does not match channel count " +
                     std::to_string(ch));
  }
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T* pv = v.data();
  T* po = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] * pv[i % ch];
  ensure_finite(out, "mul_channels");
  return out;
}

/// Standard matrix product of two rank-2 tensors.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool allow_parallel = true) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2) {
    throw ShapeError("matmul requires rank-2 tensors, got " + a.shape().str() + " and " + b.shape().str());
  }
  if (a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul inner dimensions differ: " + a.shape().str() + " x " + b.shape().str());
  }
  const std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> c(Shape{m, n});
  detail::gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n, false, allow_parallel);
  ensure_finite(c, "matmul");
  return c;
}

/// a^T * b for a (k x m), b (k x n).
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b, bool allow_parallel = true) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[0] != b.shape()[0]) {
    throw ShapeError("matmul_tn: incompatible shapes " + a.shape().str() + " and " + b.shape().str());
  }
  const std::int64_t k = a.shape()[0], m = a.shape()[1], n = b.shape()[1];
  Tensor<T> c(Shape{m, n});
  detail::gemm_tn(m, n, k, a.data(), m, b.data(), n, c.data(), n, false, allow_parallel);
  ensure_finite(c, "matmul_tn");
  return c;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.shape().rank() != 2) throw ShapeError("transpose2d requires a rank-2 tensor");
  const std::int64_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> t(Shape{n, m});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) t(j, i) = a(i, j);
  return t;
}

/// a * b^T for a (m x k), b (n x k).
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b, bool allow_parallel = true) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[1]) {
    throw ShapeError("matmul_nt: incompatible shapes " + a.shape().str() + " and " + b.shape().str());
  }
  return matmul(a, transpose2d(b), allow_parallel);
}

}  // namespace cxrnet
