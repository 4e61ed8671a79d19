#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "s2p/common.hpp"

namespace s2p {

// All tensors are dense NCHW. Vectors ride along as (N, C, 1, 1) and
// per-sample matrices (gram) as (N, C, C, 1).
struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  Shape() = default;
  Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

  std::int64_t size() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const { return cat("(", n, ",", c, ",", h, ",", w, ")"); }
};

// Flat buffer with value semantics that can skip zero-initialization; op
// outputs that overwrite every element allocate uninitialized.
template <typename T>
class RawBuffer {
 public:
  RawBuffer() = default;
  RawBuffer(std::size_t n, bool zero)
      : p_(zero ? new T[n]() : new T[n]), n_(n) {}
  RawBuffer(const RawBuffer& o) : p_(o.n_ ? new T[o.n_] : nullptr), n_(o.n_) {
    if (n_) std::copy(o.p_.get(), o.p_.get() + n_, p_.get());
  }
  RawBuffer& operator=(const RawBuffer& o) {
    if (this != &o) {
      RawBuffer tmp(o);
      *this = std::move(tmp);
    }
    return *this;
  }
  RawBuffer(RawBuffer&&) noexcept = default;
  RawBuffer& operator=(RawBuffer&&) noexcept = default;

  T* data() { return p_.get(); }
  const T* data() const { return p_.get(); }
  std::size_t size() const { return n_; }
  bool empty() const { return n_ == 0; }

 private:
  std::unique_ptr<T[]> p_;
  std::size_t n_ = 0;
};

template <typename T>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(Shape s) : TensorT(s, /*zero=*/true, 0) {}
  TensorT(Shape s, T fill) : TensorT(s, /*zero=*/false, 0) {
    std::fill(data_.data(), data_.data() + data_.size(), fill);
  }

  // Allocation without zero-fill; every element must be written before use.
  static TensorT uninit(Shape s) { return TensorT(s, /*zero=*/false, 0); }

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return shape_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_.data()[i]; }
  const T& operator[](std::int64_t i) const { return data_.data()[i]; }

  std::int64_t index(int n, int c, int y, int x) const {
    return ((std::int64_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[static_cast<size_t>(index(n, c, y, x))]; }
  const T& at(int n, int c, int y, int x) const {
    return data_[static_cast<size_t>(index(n, c, y, x))];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Per-sample base pointer (contiguous C*H*W block).
  T* sample(int n) { return data_.data() + std::int64_t(n) * sample_size(); }
  const T* sample(int n) const { return data_.data() + std::int64_t(n) * sample_size(); }
  std::int64_t sample_size() const { return std::int64_t(shape_.c) * shape_.h * shape_.w; }

  const std::vector<T>& vec() const { return data_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (std::int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

template <typename T, typename U>
TensorT<U> tensor_cast(const TensorT<T>& t) {
  TensorT<U> out(t.shape());
  for (std::int64_t i = 0; i < t.size(); ++i) out[i] = static_cast<U>(t[i]);
  return out;
}

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace s2p
