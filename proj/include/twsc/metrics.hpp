#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "twsc/channel.hpp"
#include "twsc/config.hpp"
#include "twsc/mnist.hpp"
#include "twsc/tensor.hpp"
#include "twsc/transceiver.hpp"

namespace twsc {

/// PSNR of an exact reconstruction is reported as this value with `exact` set, so averages stay
/// finite.
inline constexpr double kExactPsnrDb = 100.0;

struct PsnrValue {
  double db = 0.0;
  bool exact = false;
};

struct PsnrResult {
  std::vector<PsnrValue> per_image;
  double mean_db = 0.0;
  int exact_count = 0;
};

struct SsimResult {
  std::vector<double> per_image;
  double mean = 0.0;
};

namespace detail {

template <class T>
void check_same_images(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ContractError("image batches differ in shape: " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace detail

/// Per-image 10*log10(1/MSE) for pixels in [0,1]; averaged per image, not on pooled MSE.
template <class T>
PsnrResult psnr(const Tensor<T>& ref, const Tensor<T>& test) {
  detail::check_same_images(ref, test);
  PsnrResult r;
  const int B = ref.batch();
  const std::size_t n = static_cast<std::size_t>(ref.channels()) * ref.shape().spatial();
  double sum = 0.0;
  for (int b = 0; b < B; ++b) {
    double acc = 0.0;
    for (int c = 0; c < ref.channels(); ++c) {
      const T* x = ref.data() + ref.index(c, b);
      const T* y = test.data() + test.index(c, b);
      for (std::size_t i = 0; i < ref.shape().spatial(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        acc += d * d;
      }
    }
    const double mse = acc / static_cast<double>(n);
    PsnrValue v;
    if (mse == 0.0) {
      v = {kExactPsnrDb, true};
      ++r.exact_count;
    } else {
      v.db = 10.0 * std::log10(1.0 / mse);
    }
    r.per_image.push_back(v);
    sum += v.db;
  }
  r.mean_db = B > 0 ? sum / B : 0.0;
  return r;
}

/// Single-scale SSIM parameters (dynamic range 1).
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

namespace detail {

inline std::vector<double> gaussian_taps(int n, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(n));
  double total = 0.0;
  const int r = n / 2;
  for (int i = 0; i < n; ++i) total += g[static_cast<std::size_t>(i)] = std::exp(-(i - r) * (i - r) / (2.0 * sigma * sigma));
  for (auto& v : g) v /= total;
  return g;
}

/// Valid-mode separable filtering of one h x w plane.
inline std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& g) {
  const int n = static_cast<int>(g.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += g[static_cast<std::size_t>(k)] * img[static_cast<std::size_t>(y) * w + x + k];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += g[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM of one single-channel h x w pair over all valid window positions.
inline double ssim_plane(const std::vector<double>& x, const std::vector<double>& y, int h, int w, const SsimParams& p = {}) {
  if (h < p.window || w < p.window) throw ContractError("image smaller than the SSIM window");
  const auto g = detail::gaussian_taps(p.window, p.sigma);
  std::vector<double> xx(x.size()), yy(y.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = detail::filter_valid(x, h, w, g), my = detail::filter_valid(y, h, w, g);
  const auto exx = detail::filter_valid(xx, h, w, g), eyy = detail::filter_valid(yy, h, w, g);
  const auto exy = detail::filter_valid(xy, h, w, g);
  const double c1 = p.k1 * p.k1, c2 = p.k2 * p.k2;
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = exx[i] - mx[i] * mx[i];
    const double vy = eyy[i] - my[i] * my[i];
    const double cxy = exy[i] - mx[i] * my[i];
    acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return acc / static_cast<double>(mx.size());
}

/// Per-image SSIM (channels averaged) and the batch mean.
template <class T>
SsimResult ssim(const Tensor<T>& ref, const Tensor<T>& test, const SsimParams& p = {}) {
  detail::check_same_images(ref, test);
  SsimResult r;
  const int h = ref.height(), w = ref.width();
  if (h < p.window || w < p.window) throw ContractError("image smaller than the SSIM window");
  double sum = 0.0;
  std::vector<double> x(static_cast<std::size_t>(h) * w), y(x.size());
  for (int b = 0; b < ref.batch(); ++b) {
    double per = 0.0;
    for (int c = 0; c < ref.channels(); ++c) {
      const T* a = ref.data() + ref.index(c, b);
      const T* t = test.data() + test.index(c, b);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<double>(a[i]);
        y[i] = static_cast<double>(t[i]);
      }
      per += ssim_plane(x, y, h, w, p);
    }
    per /= ref.channels();
    r.per_image.push_back(per);
    sum += per;
  }
  r.mean = ref.batch() > 0 ? sum / ref.batch() : 0.0;
  return r;
}

/// One row of an evaluation table. direction is "A->B", "B->A" or "avg".
struct MetricRow {
  std::string system_kind;
  std::string train_channel;
  std::string eval_channel;
  double snr_db = 0.0;
  std::string direction;
  double psnr_db = 0.0;
  double ssim = 0.0;
  int n_images = 0;
  int exact_count = 0;

  bool operator==(const MetricRow&) const = default;
};

struct MetricTable {
  std::vector<MetricRow> rows;

  std::vector<MetricRow> averaged() const {
    std::vector<MetricRow> out;
    for (const auto& r : rows)
      if (r.direction == "avg") out.push_back(r);
    return out;
  }
};

inline constexpr const char* kMetricTableHeader =
    "system_kind,train_channel,eval_channel,snr_db,direction,psnr_db,ssim,n_images,exact_count";

namespace detail {
inline std::string fmt(double v) {
  std::ostringstream o;
  o.precision(10);
  o << v;
  return o.str();
}
}  // namespace detail

inline std::string to_csv(const MetricTable& t) {
  std::ostringstream o;
  o << kMetricTableHeader << '\n';
  for (const auto& r : t.rows)
    o << r.system_kind << ',' << r.train_channel << ',' << r.eval_channel << ',' << detail::fmt(r.snr_db) << ',' << r.direction
      << ',' << detail::fmt(r.psnr_db) << ',' << detail::fmt(r.ssim) << ',' << r.n_images << ',' << r.exact_count << '\n';
  return o.str();
}

inline nlohmann::json to_json(const MetricTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"system_kind", r.system_kind}, {"train_channel", r.train_channel}, {"eval_channel", r.eval_channel},
                    {"snr_db", r.snr_db}, {"direction", r.direction}, {"psnr_db", r.psnr_db}, {"ssim", r.ssim},
                    {"n_images", r.n_images}, {"exact_count", r.exact_count}});
  return rows;
}

struct LinkQuality {
  double psnr_db = 0.0;
  double ssim = 0.0;
  int n_images = 0;
  int exact_count = 0;
};

/// Sends the first `count` images of `set` from tx to rx over the physical channel model and
/// scores the reconstructions. Batches of `batch` images are power-normalised independently.
template <class T>
LinkQuality evaluate_link(NodeState<T>& tx, NodeState<T>& rx, const ImageSet& set, int count, int batch, ChannelKind kind,
                          double snr_db, RngStream& noise, RngStream& fading) {
  LinkQuality q;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (int first = 0; first < count; first += batch) {
    const int n = std::min(batch, count - first);
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = first + i;
    const auto images = gather_images<T>(set, idx);
    const auto code = transmit(tx, images);
    const auto [r, unused] = draw_realizations(kind, fading, n, snr_db);
    const auto y = apply_fading(code.x, r, noise);
    const auto out = receive(rx, y);
    const auto p = psnr(images, out);
    const auto s = ssim(images, out);
    for (const auto& v : p.per_image) psnr_sum += v.db;
    for (double v : s.per_image) ssim_sum += v;
    q.exact_count += p.exact_count;
    q.n_images += n;
  }
  if (q.n_images > 0) {
    q.psnr_db = psnr_sum / q.n_images;
    q.ssim = ssim_sum / q.n_images;
  }
  return q;
}

}  // namespace twsc
