#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "twsc/rng.hpp"
#include "twsc/tensor.hpp"

namespace twsc::nn {

/// A trainable array with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Storage<T> value;
  Storage<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t size) : name(std::move(n)), value(size, T{}), grad(size, T{}) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{}); }
};

/// What a backward pass has to produce. Frozen networks skip parameter gradients, the
/// first layer of a chain skips the input gradient.
struct BackwardMode {
  bool params = true;
  bool input = true;
};

/// Base of every layer. backward() consumes the state cached by the most recent forward().
template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out, BackwardMode mode) = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual std::string name() const = 0;
  virtual Shape output_shape(Shape in) const = 0;
};

/// Uniform fan-in initialisation with variance scale/fan_in.
template <class T>
void init_fan_in_uniform(Parameter<T>& p, std::size_t fan_in, double scale, RngStream& rng) {
  const double limit = std::sqrt(3.0 * scale / static_cast<double>(fan_in));
  for (auto& v : p.value) v = static_cast<T>(rng.uniform(-limit, limit));
}

struct ConvGeometry {
  int kh = 3, kw = 3;
  int sh = 1, sw = 1;
  int ph = 1, pw = 1;

  int out_h(int in) const { return (in + 2 * ph - kh) / sh + 1; }
  int out_w(int in) const { return (in + 2 * pw - kw) / sw + 1; }
};

namespace detail {

/// cols[(c*kh+ky)*kw+kx][(b*Ho+oy)*Wo+ox] = in[c][b][oy*sh-ph+ky][ox*sw-pw+kx] (zero outside).
template <class T>
void im2col(const Tensor<T>& in, const ConvGeometry& g, int out_h, int out_w, RowMatrix<T>& cols) {
  const int C = in.channels(), B = in.batch(), H = in.height(), W = in.width();
  const Eigen::Index ncols = static_cast<Eigen::Index>(B) * out_h * out_w;
  cols.resize(static_cast<Eigen::Index>(C) * g.kh * g.kw, ncols);
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        T* row = cols.data() + ((static_cast<Eigen::Index>(c) * g.kh + ky) * g.kw + kx) * ncols;
        for (int b = 0; b < B; ++b) {
          const T* src = in.data() + in.index(c, b);
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * g.sh - g.ph + ky;
            T* dst = row + (static_cast<std::size_t>(b) * out_h + oy) * out_w;
            if (iy < 0 || iy >= H) {
              std::fill_n(dst, out_w, T{});
              continue;
            }
            const T* srow = src + static_cast<std::size_t>(iy) * W;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * g.sw - g.pw + kx;
              dst[ox] = (ix >= 0 && ix < W) ? srow[ix] : T{};
            }
          }
        }
      }
}

/// Adjoint of im2col: scatters-adds columns back into an image of the given shape.
template <class T>
void col2im(const RowMatrix<T>& cols, const ConvGeometry& g, int out_h, int out_w, Tensor<T>& img) {
  const int C = img.channels(), B = img.batch(), H = img.height(), W = img.width();
  const Eigen::Index ncols = cols.cols();
  img.fill(T{});
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* row = cols.data() + ((static_cast<Eigen::Index>(c) * g.kh + ky) * g.kw + kx) * ncols;
        for (int b = 0; b < B; ++b) {
          T* dst = img.data() + img.index(c, b);
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * g.sh - g.ph + ky;
            if (iy < 0 || iy >= H) continue;
            const T* src = row + (static_cast<std::size_t>(b) * out_h + oy) * out_w;
            T* drow = dst + static_cast<std::size_t>(iy) * W;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * g.sw - g.pw + kx;
              if (ix >= 0 && ix < W) drow[ix] += src[ox];
            }
          }
        }
      }
}

template <class T>
Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> as_vector(Storage<T>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

}  // namespace detail

/// 2-D convolution over [c][b][h][w] tensors (1-D when kh == 1).
template <class T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, ConvGeometry geom, std::string label = "conv2d")
      : cin_(in_channels), cout_(out_channels), g_(geom), label_(std::move(label)),
        weight_(label_ + ".weight", static_cast<std::size_t>(out_channels) * in_channels * geom.kh * geom.kw),
        bias_(label_ + ".bias", static_cast<std::size_t>(out_channels)) {}

  void initialize(RngStream& rng, double scale) {
    init_fan_in_uniform(weight_, static_cast<std::size_t>(cin_) * g_.kh * g_.kw, scale, rng);
    std::fill(bias_.value.begin(), bias_.value.end(), T{});
  }

  Shape output_shape(Shape in) const override { return {cout_, in.b, g_.out_h(in.h), g_.out_w(in.w)}; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.channels() != cin_) throw ContractError(label_ + ": expected " + std::to_string(cin_) + " channels, got " + x.shape().str());
    in_shape_ = x.shape();
    const Shape os = output_shape(in_shape_);
    detail::im2col(x, g_, os.h, os.w, cols_);
    Tensor<T> out(os);
    auto w = ConstMatrixMap<T>(weight_.value.data(), cout_, cols_.rows());
    auto o = out.matrix();
    o.noalias() = w * cols_;
    o.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.value.data(), cout_);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, BackwardMode mode) override {
    const auto go = grad_out.matrix();
    if (mode.params) {
      auto gw = MatrixMap<T>(weight_.grad.data(), cout_, cols_.rows());
      gw.noalias() += go * cols_.transpose();
      detail::as_vector(bias_.grad) += go.rowwise().sum();
    }
    if (!mode.input) return {};
    RowMatrix<T> gcols(cols_.rows(), cols_.cols());
    gcols.noalias() = ConstMatrixMap<T>(weight_.value.data(), cout_, cols_.rows()).transpose() * go;
    Tensor<T> gin(in_shape_);
    const Shape os = output_shape(in_shape_);
    detail::col2im(gcols, g_, os.h, os.w, gin);
    return gin;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::string name() const override { return label_; }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  const ConvGeometry& geometry() const { return g_; }
  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

 private:
  int cin_, cout_;
  ConvGeometry g_;
  std::string label_;
  Parameter<T> weight_;  // (cout, cin, kh, kw)
  Parameter<T> bias_;
  Shape in_shape_{};
  RowMatrix<T> cols_;
};

/// Transposed 2-D convolution: the data-adjoint of a Conv2d mapping out_channels images of
/// the output size back to in_channels images of the input size. output_padding resolves the
/// size ambiguity of strided layers.
template <class T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, ConvGeometry geom, int output_padding,
                  std::string label = "convT2d")
      : cin_(in_channels), cout_(out_channels), g_(geom), out_pad_(output_padding), label_(std::move(label)),
        weight_(label_ + ".weight", static_cast<std::size_t>(out_channels) * geom.kh * geom.kw * in_channels),
        bias_(label_ + ".bias", static_cast<std::size_t>(out_channels)) {
    if (output_padding < 0 || (output_padding > 0 && (output_padding >= geom.sh || output_padding >= geom.sw)))
      throw ContractError(label_ + ": output padding must be smaller than the stride");
  }

  void initialize(RngStream& rng, double scale) {
    init_fan_in_uniform(weight_, static_cast<std::size_t>(cin_) * g_.kh * g_.kw, scale, rng);
    std::fill(bias_.value.begin(), bias_.value.end(), T{});
  }

  int out_h(int in) const { return (in - 1) * g_.sh - 2 * g_.ph + g_.kh + out_pad_; }
  int out_w(int in) const { return (in - 1) * g_.sw - 2 * g_.pw + g_.kw + out_pad_; }

  Shape output_shape(Shape in) const override { return {cout_, in.b, out_h(in.h), out_w(in.w)}; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.channels() != cin_) throw ContractError(label_ + ": expected " + std::to_string(cin_) + " channels, got " + x.shape().str());
    input_ = x;
    const Shape os = output_shape(x.shape());
    RowMatrix<T> cols(static_cast<Eigen::Index>(cout_) * g_.kh * g_.kw, static_cast<Eigen::Index>(x.shape().per_channel()));
    cols.noalias() = wmat() * x.matrix();
    Tensor<T> out(os);
    detail::col2im(cols, g_, x.height(), x.width(), out);
    out.matrix().colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.value.data(), cout_);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, BackwardMode mode) override {
    RowMatrix<T> gcols;
    detail::im2col(grad_out, g_, input_.height(), input_.width(), gcols);
    if (mode.params) {
      MatrixMap<T>(weight_.grad.data(), gcols.rows(), cin_).noalias() += gcols * input_.matrix().transpose();
      detail::as_vector(bias_.grad) += grad_out.matrix().rowwise().sum();
    }
    if (!mode.input) return {};
    Tensor<T> gin(input_.shape());
    gin.matrix().noalias() = wmat().transpose() * gcols;
    return gin;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::string name() const override { return label_; }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  const ConvGeometry& geometry() const { return g_; }
  int output_padding() const { return out_pad_; }
  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

 private:
  ConstMatrixMap<T> wmat() const {
    return {weight_.value.data(), static_cast<Eigen::Index>(cout_) * g_.kh * g_.kw, cin_};
  }

  int cin_, cout_;
  ConvGeometry g_;
  int out_pad_;
  std::string label_;
  Parameter<T> weight_;  // (cout, kh, kw, cin)
  Parameter<T> bias_;
  Tensor<T> input_;
};

/// [c][b][h][w] -> [c*h*w][b][1][1], feature index c*h*w + y*w + x.
template <class T>
class Flatten final : public Layer<T> {
 public:
  Shape output_shape(Shape in) const override { return {static_cast<int>(in.c * in.spatial()), in.b, 1, 1}; }

  Tensor<T> forward(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    Tensor<T> out(output_shape(in_shape_));
    const std::size_t sp = in_shape_.spatial();
    for (int c = 0; c < in_shape_.c; ++c)
      for (int b = 0; b < in_shape_.b; ++b) {
        const T* src = x.data() + x.index(c, b);
        for (std::size_t s = 0; s < sp; ++s) out.at(static_cast<int>(c * sp + s), b) = src[s];
      }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, BackwardMode mode) override {
    if (!mode.input) return {};
    Tensor<T> gin(in_shape_);
    const std::size_t sp = in_shape_.spatial();
    for (int c = 0; c < in_shape_.c; ++c)
      for (int b = 0; b < in_shape_.b; ++b) {
        T* dst = gin.data() + gin.index(c, b);
        for (std::size_t s = 0; s < sp; ++s) dst[s] = grad_out.at(static_cast<int>(c * sp + s), b);
      }
    return gin;
  }

  std::string name() const override { return "flatten"; }

 private:
  Shape in_shape_{};
};

/// Fully connected layer over [features][b] tensors.
template <class T>
class Dense final : public Layer<T> {
 public:
  Dense(int in_features, int out_features, std::string label = "dense")
      : fin_(in_features), fout_(out_features), label_(std::move(label)),
        weight_(label_ + ".weight", static_cast<std::size_t>(in_features) * out_features),
        bias_(label_ + ".bias", static_cast<std::size_t>(out_features)) {}

  void initialize(RngStream& rng, double scale) {
    init_fan_in_uniform(weight_, static_cast<std::size_t>(fin_), scale, rng);
    std::fill(bias_.value.begin(), bias_.value.end(), T{});
  }

  Shape output_shape(Shape in) const override { return {fout_, in.b, 1, 1}; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.channels() != fin_ || x.shape().spatial() != 1)
      throw ContractError(label_ + ": expected " + std::to_string(fin_) + " features, got " + x.shape().str());
    input_ = x;
    Tensor<T> out(output_shape(x.shape()));
    out.matrix().noalias() = ConstMatrixMap<T>(weight_.value.data(), fout_, fin_) * x.matrix();
    out.matrix().colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.value.data(), fout_);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, BackwardMode mode) override {
    const auto go = grad_out.matrix();
    if (mode.params) {
      MatrixMap<T>(weight_.grad.data(), fout_, fin_).noalias() += go * input_.matrix().transpose();
      detail::as_vector(bias_.grad) += go.rowwise().sum();
    }
    if (!mode.input) return {};
    Tensor<T> gin(input_.shape());
    gin.matrix().noalias() = ConstMatrixMap<T>(weight_.value.data(), fout_, fin_).transpose() * go;
    return gin;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::string name() const override { return label_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int fin_, fout_;
  std::string label_;
  Parameter<T> weight_;  // (out, in)
  Parameter<T> bias_;
  Tensor<T> input_;
};

enum class Activation { elu, relu, sigmoid };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::elu: return "elu";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

/// Elementwise activation; caches its output, which is all the derivative needs.
template <class T>
class ActivationLayer final : public Layer<T> {
 public:
  explicit ActivationLayer(Activation kind) : kind_(kind) {}

  Shape output_shape(Shape in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x) override {
    output_ = x;
    for (auto& v : output_.storage()) v = apply(v);
    return output_;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, BackwardMode mode) override {
    if (!mode.input) return {};
    Tensor<T> g = grad_out;
    const T* y = output_.data();
    T* d = g.data();
    const std::size_t n = g.size();
    switch (kind_) {
      case Activation::elu:
        for (std::size_t i = 0; i < n; ++i) d[i] *= y[i] > T{0} ? T{1} : y[i] + T{1};
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < n; ++i) d[i] = y[i] > T{0} ? d[i] : T{0};
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < n; ++i) d[i] *= y[i] * (T{1} - y[i]);
        break;
    }
    return g;
  }

  std::string name() const override { return to_string(kind_); }
  Activation kind() const { return kind_; }

  T apply(T v) const {
    switch (kind_) {
      case Activation::elu: return v > T{0} ? v : std::expm1(v);
      case Activation::relu: return v > T{0} ? v : T{0};
      case Activation::sigmoid: return T{1} / (T{1} + std::exp(-v));
    }
    return v;
  }

 private:
  Activation kind_;
  Tensor<T> output_;
};

}  // namespace twsc::nn
