#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "twsc/config.hpp"
#include "twsc/rng.hpp"
#include "twsc/symbols.hpp"
#include "twsc/transceiver.hpp"

namespace twsc {

/// Noise variance per complex symbol for unit transmit power; +inf dB gives 0.
inline double noise_variance(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

/// Flat block fading: one coefficient per batch item, held over all of its symbols.
struct ChannelRealization {
  std::vector<std::complex<double>> fading;
  double noise_var = 0.0;
  double snr_db = std::numeric_limits<double>::infinity();

  int batch() const { return static_cast<int>(fading.size()); }
  bool operator==(const ChannelRealization&) const = default;
};

inline ChannelRealization awgn_realization(int batch, double snr_db) {
  return {std::vector<std::complex<double>>(static_cast<std::size_t>(batch), {1.0, 0.0}), noise_variance(snr_db), snr_db};
}

/// Draws h ~ CN(0,1) per item; the A->B and B->A realizations are one draw, returned twice.
inline std::pair<ChannelRealization, ChannelRealization> sample_reciprocal_rayleigh(
    RngStream& rng, int batch, double snr_db = std::numeric_limits<double>::infinity()) {
  if (batch < 1) throw ContractError("batch must be >= 1");
  ChannelRealization r;
  r.fading.resize(static_cast<std::size_t>(batch));
  const double s = std::sqrt(0.5);
  for (auto& h : r.fading) {
    const double re = rng.normal();
    const double im = rng.normal();
    h = {s * re, s * im};
  }
  r.noise_var = noise_variance(snr_db);
  r.snr_db = snr_db;
  return {r, r};
}

/// y[b,i] = h[b] * x[b,i] + n[b,i], n circular complex Gaussian with variance noise_var.
template <class T>
SymbolBlock<T> apply_fading(const SymbolBlock<T>& x, const ChannelRealization& real, RngStream& rng) {
  if (real.batch() != x.batch())
    throw ContractError("realization covers " + std::to_string(real.batch()) + " items, block has " + std::to_string(x.batch()));
  SymbolBlock<T> y(x.batch(), x.symbols());
  const double sd = std::sqrt(real.noise_var / 2.0);
  for (int b = 0; b < x.batch(); ++b) {
    const auto h = real.fading[static_cast<std::size_t>(b)];
    for (int i = 0; i < x.symbols(); ++i) {
      std::complex<double> v = h * x.at(b, i);
      if (sd > 0) {
        const double nr = sd * rng.normal();
        const double ni = sd * rng.normal();
        v += std::complex<double>(nr, ni);
      }
      y.set(b, i, v);
    }
  }
  y.power = x.power;
  return y;
}

template <class T>
SymbolBlock<T> apply_awgn(const SymbolBlock<T>& x, double snr_db, RngStream& rng) {
  return apply_fading(x, awgn_realization(x.batch(), snr_db), rng);
}

/// Per-direction traffic counters of the physical link.
struct LinkAudit {
  std::int64_t forward_payload_count = 0;
  std::int64_t backward_gradient_count = 0;  // stays 0: the link carries no gradients
  std::int64_t bytes_forward = 0;
  double max_power_deviation = 0.0;  // worst |power - 1| of any block that crossed

  bool operator==(const LinkAudit&) const = default;
};

inline nlohmann::json to_json(const LinkAudit& a) {
  return {{"forward_payload_count", a.forward_payload_count},
          {"backward_gradient_count", a.backward_gradient_count},
          {"bytes_forward", a.bytes_forward},
          {"max_power_deviation", a.max_power_deviation}};
}

inline constexpr double kPowerTolerance = 1e-6;

/// Symbols as they arrive at the far node. Deliberately carries nothing that could route a
/// gradient back to the sender.
template <class T>
struct ReceivedBlock {
  SymbolBlock<T> y;
};

/// Pushes a unit-power block through the physical channel and counts it. The returned block is
/// a detached value: nothing downstream can reach the sender's weights through it.
template <class T>
ReceivedBlock<T> link_transmit(NodeId src, NodeId dst, const SymbolBlock<T>& x, const ChannelRealization& realization,
                               RngStream& noise, LinkAudit& audit) {
  if (src == dst) throw ContractError("link endpoints must differ");
  const double dev = std::abs(x.measured_power() - 1.0);
  if (dev > kPowerTolerance) throw ContractError("transmit block power deviates from 1 by " + std::to_string(dev));
  audit.max_power_deviation = std::max(audit.max_power_deviation, dev);
  ++audit.forward_payload_count;
  audit.bytes_forward += static_cast<std::int64_t>(x.iq.size() * sizeof(T));
  return {apply_fading(x, realization, noise)};
}

/// The gradient barrier. Any attempt to send a gradient back over the air is recorded and is a
/// hard fault.
template <class T>
[[noreturn]] void link_backward(const ReceivedBlock<T>&, LinkAudit& audit) {
  ++audit.backward_gradient_count;
  throw FeedbackViolation("gradient attempted to cross the inter-node link");
}

/// One direction of the physical link with its own noise stream.
template <class T>
class Link {
 public:
  Link(NodeId src, NodeId dst, RngStream noise) : src_(src), dst_(dst), noise_(std::move(noise)) {
    if (src == dst) throw ContractError("link endpoints must differ");
  }

  ReceivedBlock<T> transmit(const SymbolBlock<T>& x, const ChannelRealization& r) {
    return link_transmit(src_, dst_, x, r, noise_, audit_);
  }
  [[noreturn]] void backward(const ReceivedBlock<T>& y) { link_backward(y, audit_); }

  const LinkAudit& audit() const { return audit_; }
  LinkAudit& audit() { return audit_; }
  NodeId source() const { return src_; }
  NodeId destination() const { return dst_; }
  RngStream& noise() { return noise_; }

 private:
  NodeId src_, dst_;
  RngStream noise_;
  LinkAudit audit_;
};

/// Channel with a backward pass, for the one-way end-to-end baseline only. The gradient of
/// y = h x + n with respect to x is conj(h) * g.
template <class T>
class DifferentiableChannel {
 public:
  SymbolBlock<T> forward(const SymbolBlock<T>& x, const ChannelRealization& r, RngStream& rng) {
    fading_ = r.fading;
    return apply_fading(x, r, rng);
  }

  SymbolBlock<T> backward(const SymbolBlock<T>& grad_y) const {
    SymbolBlock<T> g(grad_y.batch(), grad_y.symbols());
    for (int b = 0; b < g.batch(); ++b) {
      const auto hc = std::conj(fading_[static_cast<std::size_t>(b)]);
      for (int i = 0; i < g.symbols(); ++i) g.set(b, i, hc * grad_y.at(b, i));
    }
    return g;
  }

 private:
  std::vector<std::complex<double>> fading_;
};

/// Draws the realization shared by both directions for one batch.
inline std::pair<ChannelRealization, ChannelRealization> draw_realizations(ChannelKind kind, RngStream& fading, int batch,
                                                                           double snr_db) {
  if (kind == ChannelKind::awgn) {
    auto r = awgn_realization(batch, snr_db);
    return {r, r};
  }
  return sample_reciprocal_rayleigh(fading, batch, snr_db);
}

}  // namespace twsc
