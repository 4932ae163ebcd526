#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "varpred/error.hpp"

namespace varpred {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Dense row-major array. Image batches use the [n, channels, height, width]
// layout; latent batches and score matrices use [n, dims].
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    for (int d : shape_) {
      if (d < 0) throw ShapeError("negative tensor dimension in " + shape_string(shape_));
    }
    data_.assign(shape_size(shape_), fill);
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Row-major 2-D access for [rows, cols] tensors.
  T& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  const T& at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  // Number of elements per leading-axis item.
  std::size_t stride0() const { return shape_.empty() || shape_[0] == 0 ? 0 : size() / shape_[0]; }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Rows [begin, end) along the leading axis.
  Tensor slice_rows(int begin, int end) const {
    if (begin < 0 || end > shape_.at(0) || begin > end) throw ShapeError("slice out of range");
    Shape s = shape_;
    s[0] = end - begin;
    const std::size_t step = stride0();
    return Tensor(s, std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(begin * step),
                                    data_.begin() + static_cast<std::ptrdiff_t>(end * step)));
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Stacks tensors with equal trailing shape along the leading axis.
template <class T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeError("concat_rows: trailing shapes differ: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  Shape s = a.shape();
  s[0] += b.dim(0);
  std::vector<T> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.storage().begin(), a.storage().end());
  data.insert(data.end(), b.storage().begin(), b.storage().end());
  return Tensor<T>(s, std::move(data));
}

// Concatenates two [n, c, h, w] batches along the channel axis.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const int n = a.dim(0);
  const std::size_t sa = a.stride0(), sb = b.stride0();
  Tensor<T> out({n, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * sa, sa, out.data() + i * (sa + sb));
    std::copy_n(b.data() + i * sb, sb, out.data() + i * (sa + sb) + sa);
  }
  return out;
}

// Inverse of concat_channels: first `ca` channels go to the first output.
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int ca) {
  const int n = x.dim(0), cb = x.dim(1) - ca;
  Tensor<T> a({n, ca, x.dim(2), x.dim(3)}), b({n, cb, x.dim(2), x.dim(3)});
  const std::size_t sa = a.stride0(), sb = b.stride0();
  for (int i = 0; i < n; ++i) {
    std::copy_n(x.data() + i * (sa + sb), sa, a.data() + i * sa);
    std::copy_n(x.data() + i * (sa + sb) + sa, sb, b.data() + i * sb);
  }
  return {std::move(a), std::move(b)};
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const int> rows) {
  Shape s = x.shape();
  s[0] = static_cast<int>(rows.size());
  Tensor<T> out(s);
  const std::size_t step = x.stride0();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data() + static_cast<std::size_t>(rows[i]) * step, step, out.data() + i * step);
  }
  return out;
}

}  // namespace varpred
