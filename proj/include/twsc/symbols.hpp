#pragma once

#include <cmath>
#include <complex>

#include "twsc/errors.hpp"
#include "twsc/tensor.hpp"

namespace twsc {

/// A batch of complex channel symbols, stored as a [2][B][1][N] tensor (re, im planes).
template <class T>
struct SymbolBlock {
  Tensor<T> iq;
  double power = 0.0;  // declared average power per complex symbol

  SymbolBlock() = default;
  SymbolBlock(int batch, int symbols) : iq(Shape{2, batch, 1, symbols}) {}
  explicit SymbolBlock(Tensor<T> t, double declared = 0.0) : iq(std::move(t)), power(declared) {
    if (iq.channels() != 2 || iq.height() != 1) throw ContractError("symbol block must be [2][B][1][N], got " + iq.shape().str());
  }

  int batch() const { return iq.batch(); }
  int symbols() const { return iq.width(); }
  T& re(int b, int i) { return iq.at(0, b, 0, i); }
  T& im(int b, int i) { return iq.at(1, b, 0, i); }
  T re(int b, int i) const { return iq.at(0, b, 0, i); }
  T im(int b, int i) const { return iq.at(1, b, 0, i); }
  std::complex<double> at(int b, int i) const { return {static_cast<double>(re(b, i)), static_cast<double>(im(b, i))}; }
  void set(int b, int i, std::complex<double> v) {
    re(b, i) = static_cast<T>(v.real());
    im(b, i) = static_cast<T>(v.imag());
  }

  /// (1/(B*N)) * sum |symbol|^2, accumulated in double.
  double measured_power() const {
    double acc = 0.0;
    for (T v : iq.values()) acc += static_cast<double>(v) * static_cast<double>(v);
    const double n = static_cast<double>(batch()) * symbols();
    return n > 0 ? acc / n : 0.0;
  }

  bool operator==(const SymbolBlock&) const = default;
};

/// Packs [2K][B][h][w] features into K*h*w complex symbols per item: symbol p*K + k takes
/// channel 2k as its real part and channel 2k+1 as its imaginary part at spatial position p.
template <class T>
SymbolBlock<T> pack_symbols(const Tensor<T>& features) {
  if (features.channels() % 2 != 0) throw ContractError("packing needs an even channel count");
  const int K = features.channels() / 2, B = features.batch();
  const int P = static_cast<int>(features.shape().spatial());
  SymbolBlock<T> out(B, K * P);
  for (int k = 0; k < K; ++k)
    for (int b = 0; b < B; ++b) {
      const T* re = features.data() + features.index(2 * k, b);
      const T* im = features.data() + features.index(2 * k + 1, b);
      for (int p = 0; p < P; ++p) {
        out.re(b, p * K + k) = re[p];
        out.im(b, p * K + k) = im[p];
      }
    }
  return out;
}

/// Inverse of pack_symbols for a [2K][B][h][w] target.
template <class T>
Tensor<T> unpack_symbols(const SymbolBlock<T>& x, int channels, int h, int w) {
  const int K = channels / 2, B = x.batch(), P = h * w;
  if (channels % 2 != 0 || K * P != x.symbols())
    throw ContractError("cannot unpack " + std::to_string(x.symbols()) + " symbols into " + std::to_string(channels) + "x" +
                        std::to_string(h) + "x" + std::to_string(w));
  Tensor<T> out(Shape{channels, B, h, w});
  for (int k = 0; k < K; ++k)
    for (int b = 0; b < B; ++b) {
      T* re = out.data() + out.index(2 * k, b);
      T* im = out.data() + out.index(2 * k + 1, b);
      for (int p = 0; p < P; ++p) {
        re[p] = x.re(b, p * K + k);
        im[p] = x.im(b, p * K + k);
      }
    }
  return out;
}

inline constexpr double kMinTransmitPower = 1e-12;

template <class T>
struct NormalizedBlock {
  SymbolBlock<T> block;
  double scale = 1.0;  // factor applied to every symbol
};

/// Scales the whole batch by one scalar so the average power per complex symbol is 1.
template <class T>
NormalizedBlock<T> normalize_power(const SymbolBlock<T>& x) {
  const double p = x.measured_power();
  if (!(p > kMinTransmitPower)) throw DegenerateInput("transmit block power " + std::to_string(p) + " is below 1e-12");
  NormalizedBlock<T> out{x, 1.0 / std::sqrt(p)};
  for (auto& v : out.block.iq.storage()) v = static_cast<T>(static_cast<double>(v) * out.scale);
  out.block.power = 1.0;
  return out;
}

/// Gradient of normalize_power with respect to its input. With P the mean power over M
/// complex symbols and s the raw input: g_s = g / sqrt(P) - s * <g, s> / (M * P^1.5).
template <class T>
SymbolBlock<T> normalize_power_backward(const SymbolBlock<T>& raw, double scale, const SymbolBlock<T>& grad) {
  const double m = static_cast<double>(raw.batch()) * raw.symbols();
  double dot = 0.0;
  for (std::size_t i = 0; i < raw.iq.size(); ++i)
    dot += static_cast<double>(raw.iq.data()[i]) * static_cast<double>(grad.iq.data()[i]);
  const double coef = dot * scale * scale * scale / m;
  SymbolBlock<T> g(raw.batch(), raw.symbols());
  for (std::size_t i = 0; i < raw.iq.size(); ++i)
    g.iq.data()[i] = static_cast<T>(static_cast<double>(grad.iq.data()[i]) * scale - static_cast<double>(raw.iq.data()[i]) * coef);
  return g;
}

}  // namespace twsc
