#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "sgglc/common.hpp"

namespace sgglc {

// Dense NCHW shape. All feature maps in the engine are rank-4; vectors
// (biases, norm scales) are stored as (1, c, 1, 1).
struct Shape {
  i64 n = 0, c = 0, h = 0, w = 0;

  Shape() = default;
  Shape(i64 n_, i64 c_, i64 h_, i64 w_) : n(n_), c(c_), h(h_), w(w_) {}

  i64 count() const { return n * c * h * w; }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Row-major dense tensor over float or double. Value semantics; a tensor is
// never mutated while shared between threads.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(check_count(s), fill) {}
  Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
    if (static_cast<i64>(data_.size()) != shape_.count())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  i64 count() const { return shape_.count(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](i64 i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](i64 i) const { return data_[static_cast<size_t>(i)]; }

  i64 index(i64 n, i64 c, i64 y, i64 x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(i64 n, i64 c, i64 y, i64 x) { return data_[static_cast<size_t>(index(n, c, y, x))]; }
  const T& at(i64 n, i64 c, i64 y, i64 x) const {
    return data_[static_cast<size_t>(index(n, c, y, x))];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (i64 i = 0; i < count(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

  bool same_bits(const Tensor& o) const {
    if (shape_ != o.shape_) return false;
    for (size_t i = 0; i < data_.size(); ++i)
      if (data_[i] != o.data_[i]) return false;
    return true;
  }

 private:
  static i64 check_count(const Shape& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw ShapeError("negative dimension in " + s.str());
    return s.count();
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  if (debug_checks() && !t.all_finite())
    throw NumericError(std::string(op) + " produced a non-finite value");
}

}  // namespace sgglc
