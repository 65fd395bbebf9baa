#pragma once
// Deliberately naive reference computations used to check the optimised paths. Nothing here
// shares code with the im2col / GEMM / separable-filter implementations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "twsc/tensor.hpp"

namespace twsc::reference {

/// Direct nested-loop convolution. weight is (cout, cin, kh, kw).
inline Tensor<double> conv2d(const Tensor<double>& in, std::span<const double> weight, std::span<const double> bias,
                             int cout, int kh, int kw, int sh, int sw, int ph, int pw) {
  const int cin = in.channels(), B = in.batch(), H = in.height(), W = in.width();
  const int Ho = (H + 2 * ph - kh) / sh + 1, Wo = (W + 2 * pw - kw) / sw + 1;
  Tensor<double> out(Shape{cout, B, Ho, Wo});
  for (int co = 0; co < cout; ++co)
    for (int b = 0; b < B; ++b)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = bias[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * sh - ph + ky, ix = ox * sw - pw + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += in.at(ci, b, iy, ix) * weight[((static_cast<std::size_t>(co) * cin + ci) * kh + ky) * kw + kx];
              }
          out.at(co, b, oy, ox) = acc;
        }
  return out;
}

/// Direct scatter form of the transposed convolution: every input pixel stamps its kernel
/// onto the output. weight is (cout, kh, kw, cin).
inline Tensor<double> conv_transpose2d(const Tensor<double>& in, std::span<const double> weight,
                                       std::span<const double> bias, int cout, int k, int s, int p, int out_pad) {
  const int cin = in.channels(), B = in.batch(), H = in.height(), W = in.width();
  const int Ho = (H - 1) * s - 2 * p + k + out_pad, Wo = (W - 1) * s - 2 * p + k + out_pad;
  Tensor<double> out(Shape{cout, B, Ho, Wo});
  for (int co = 0; co < cout; ++co)
    for (int b = 0; b < B; ++b)
      for (int y = 0; y < Ho; ++y)
        for (int x = 0; x < Wo; ++x) out.at(co, b, y, x) = bias[static_cast<std::size_t>(co)];
  for (int ci = 0; ci < cin; ++ci)
    for (int b = 0; b < B; ++b)
      for (int iy = 0; iy < H; ++iy)
        for (int ix = 0; ix < W; ++ix)
          for (int co = 0; co < cout; ++co)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int y = iy * s - p + ky, x = ix * s - p + kx;
                if (y < 0 || y >= Ho || x < 0 || x >= Wo) continue;
                out.at(co, b, y, x) += in.at(ci, b, iy, ix) * weight[((static_cast<std::size_t>(co) * k + ky) * k + kx) * cin + ci];
              }
  return out;
}

inline double elu(double v) { return v > 0 ? v : std::exp(v) - 1.0; }
inline double relu(double v) { return v > 0 ? v : 0.0; }
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// Central finite difference of f with respect to x[i].
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double keep = x;
  x = keep + h;
  const double up = f();
  x = keep - h;
  const double down = f();
  x = keep;
  return (up - down) / (2.0 * h);
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// Per-image mean squared error by double loop.
inline double mse(const double* a, const double* b, int h, int w) {
  double acc = 0.0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double d = a[i * w + j] - b[i * w + j];
      acc += d * d;
    }
  return acc / (static_cast<double>(h) * w);
}

/// Brute-force PSNR for MAX = 1.
inline double psnr(const double* ref, const double* test, int h, int w) {
  return 10.0 * std::log10(1.0 / mse(ref, test, h, w));
}

/// Sliding-window SSIM: for every valid 11x11 window position, the Gaussian-weighted local
/// statistics are summed directly over the window (no separable filtering).
inline double ssim(const double* x, const double* y, int h, int w, int win = 11, double sigma = 1.5) {
  std::vector<double> g(static_cast<std::size_t>(win * win));
  double total = 0.0;
  const int r = win / 2;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double v = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2.0 * sigma * sigma));
      g[static_cast<std::size_t>(i * win + j)] = v;
      total += v;
    }
  for (auto& v : g) v /= total;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  int count = 0;
  for (int top = 0; top + win <= h; ++top)
    for (int left = 0; left + win <= w; ++left) {
      double mx = 0, my = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wt = g[static_cast<std::size_t>(i * win + j)];
          mx += wt * x[(top + i) * w + left + j];
          my += wt * y[(top + i) * w + left + j];
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wt = g[static_cast<std::size_t>(i * win + j)];
          const double dx = x[(top + i) * w + left + j] - mx, dy = y[(top + i) * w + left + j] - my;
          vx += wt * dx * dx;
          vy += wt * dy * dy;
          cxy += wt * dx * dy;
        }
      acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / count;
}

}  // namespace twsc::reference
