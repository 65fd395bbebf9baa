#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "twsc/errors.hpp"

namespace twsc {

/// Dimensions of a channel-major batch tensor. Memory order is [c][b][h][w], so a
/// convolution over the whole batch becomes one matrix product with the batch folded
/// into the column dimension.
struct Shape {
  int c = 0;
  int b = 0;
  int h = 1;
  int w = 1;

  std::size_t spatial() const { return static_cast<std::size_t>(h) * w; }
  std::size_t per_channel() const { return static_cast<std::size_t>(b) * spatial(); }
  std::size_t size() const { return static_cast<std::size_t>(c) * per_channel(); }
  auto operator<=>(const Shape&) const = default;

  std::string str() const {
    return "[" + std::to_string(c) + "," + std::to_string(b) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
  }
};

/// Heap storage aligned for the widest vector unit, so vectorized reductions never depend on
/// where the allocator happened to place a buffer.
template <class T>
using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, Storage<T> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape_.size()) throw ContractError("tensor data does not match shape " + shape_.str());
  }
  Tensor(Shape shape, const std::vector<T>& values) : Tensor(shape, Storage<T>(values.begin(), values.end())) {}

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.c; }
  int batch() const { return shape_.b; }
  int height() const { return shape_.h; }
  int width() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  Storage<T>& storage() { return data_; }
  const Storage<T>& storage() const { return data_; }

  std::size_t index(int c, int b, int h = 0, int w = 0) const {
    return ((static_cast<std::size_t>(c) * shape_.b + b) * shape_.h + h) * shape_.w + w;
  }
  T& at(int c, int b, int h = 0, int w = 0) { return data_[index(c, b, h, w)]; }
  T at(int c, int b, int h = 0, int w = 0) const { return data_[index(c, b, h, w)]; }

  /// View as a (channels x batch*spatial) row-major matrix.
  MatrixMap<T> matrix() { return {data_.data(), shape_.c, static_cast<Eigen::Index>(shape_.per_channel())}; }
  ConstMatrixMap<T> matrix() const {
    return {data_.data(), shape_.c, static_cast<Eigen::Index>(shape_.per_channel())};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape s) {
    if (s.size() != data_.size()) throw ContractError("cannot reshape " + shape_.str() + " to " + s.str());
    shape_ = s;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  Storage<T> data_;
};

/// Copies batch items [first, first+count) of every channel.
template <class T>
Tensor<T> slice_batch(const Tensor<T>& t, int first, int count) {
  if (first < 0 || count < 0 || first + count > t.batch()) throw ContractError("batch slice out of range");
  Shape s = t.shape();
  s.b = count;
  Tensor<T> out(s);
  const std::size_t sp = s.spatial();
  for (int c = 0; c < s.c; ++c)
    std::copy_n(t.data() + t.index(c, first), count * sp, out.data() + out.index(c, 0));
  return out;
}

/// Stacks two tensors along the batch axis.
template <class T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width())
    throw ContractError("concat_batch shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Shape s = a.shape();
  s.b = a.batch() + b.batch();
  Tensor<T> out(s);
  const std::size_t sp = s.spatial();
  for (int c = 0; c < s.c; ++c) {
    std::copy_n(a.data() + a.index(c, 0), a.batch() * sp, out.data() + out.index(c, 0));
    std::copy_n(b.data() + b.index(c, 0), b.batch() * sp, out.data() + out.index(c, a.batch()));
  }
  return out;
}

/// Stacks tensors with equal batch/spatial extent along the channel axis.
template <class T>
Tensor<T> concat_channels(std::initializer_list<const Tensor<T>*> parts) {
  Shape s{};
  for (const auto* p : parts) {
    if (s.c == 0 && s.b == 0) {
      s = p->shape();
      s.c = 0;
    } else if (p->batch() != s.b || p->height() != s.h || p->width() != s.w) {
      throw ContractError("concat_channels shape mismatch");
    }
    s.c += p->channels();
  }
  Tensor<T> out(s);
  std::size_t offset = 0;
  for (const auto* p : parts) {
    std::copy(p->storage().begin(), p->storage().end(), out.data() + offset);
    offset += p->size();
  }
  return out;
}

/// Channels [first, first+count) as a new tensor.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& t, int first, int count) {
  Shape s = t.shape();
  s.c = count;
  Tensor<T> out(s);
  std::copy_n(t.data() + t.index(first, 0), out.size(), out.data());
  return out;
}

template <class T>
T max_abs_difference(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ContractError("max_abs_difference shape mismatch");
  T m{};
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace twsc
