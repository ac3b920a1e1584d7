#pragma once

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "salnet/error.hpp"

namespace salnet {

// Dense 4-D array in (batch, channels, rows, cols) order, row-major and
// contiguous. This is the universal value type of the library; per-channel
// vectors (biases, batch-norm parameters) are carried as (1, C, 1, 1).
template <typename T>
class TensorT {
 public:
  TensorT() = default;  // empty tensor, shape (0,0,0,0)

  TensorT(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w) {
    check_dims();
    data_.assign(static_cast<std::size_t>(size()), T(0));
  }

  TensorT(int n, int c, int h, int w, T fill) : n_(n), c_(c), h_(h), w_(w) {
    check_dims();
    data_.assign(static_cast<std::size_t>(size()), fill);
  }

  static TensorT from(int n, int c, int h, int w, std::initializer_list<T> values) {
    TensorT t(n, c, h, w);
    if (static_cast<std::int64_t>(values.size()) != t.size()) {
      throw DimensionError("tensor literal: got " + std::to_string(values.size()) +
                           " values for shape " + t.shape_str());
    }
    std::size_t i = 0;
    for (T v : values) t.data_[i++] = v;
    return t;
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }

  std::int64_t size() const {
    return static_cast<std::int64_t>(n_) * c_ * h_ * w_;
  }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  std::int64_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::int64_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }
  T& at(int n, int c, int y, int x) { return data_[static_cast<std::size_t>(offset(n, c, y, x))]; }
  const T& at(int n, int c, int y, int x) const {
    return data_[static_cast<std::size_t>(offset(n, c, y, x))];
  }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  void fill(T v) { data_.assign(data_.size(), v); }

  bool same_shape(const TensorT& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(" << n_ << "," << c_ << "," << h_ << "," << w_ << ")";
    return os.str();
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    if (empty()) return out;
    out = TensorT<U>(n_, c_, h_, w_);
    for (std::int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  void check_dims() const {
    if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1) {
      throw DimensionError("tensor dimensions must all be >= 1, got " + shape_str());
    }
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
  }
}

template <typename T>
void add_inplace(TensorT<T>& dst, const TensorT<T>& src) {
  check_same_shape(dst, src, "add");
  for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
double sum(const TensorT<T>& t) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) acc += static_cast<double>(t[i]);
  return acc;
}

template <typename T>
double mean(const TensorT<T>& t) {
  return t.size() == 0 ? 0.0 : sum(t) / static_cast<double>(t.size());
}

template <typename T>
bool bitwise_equal(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace salnet
