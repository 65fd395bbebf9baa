#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "twsc/config.hpp"
#include "twsc/nn/adam.hpp"
#include "twsc/nn/sequential.hpp"
#include "twsc/rng.hpp"
#include "twsc/symbols.hpp"
#include "twsc/transceiver.hpp"

namespace twsc {

/// Conv1d stacks of the channel surrogate. Convolutions use same padding so the symbol axis
/// keeps its length.
struct SurrogateArch {
  std::vector<int> generator_filters{256, 128, 64, 2};
  std::vector<int> generator_kernels{5, 3, 3, 3};
  std::vector<int> discriminator_filters{256, 128, 64, 16};
  std::vector<int> discriminator_kernels{5, 3, 3, 3};
  int dense_width = 100;
  int noise_dim = 2;

  static SurrogateArch standard(int noise_dim = 2) {
    SurrogateArch a;
    a.noise_dim = noise_dim;
    return a;
  }
  static SurrogateArch tiny() {
    SurrogateArch a;
    a.generator_filters = {4, 4, 3, 2};
    a.discriminator_filters = {4, 4, 3, 2};
    a.dense_width = 3;
    return a;
  }
};

/// The SNR enters both networks as a constant extra channel holding snr_db * this factor.
inline constexpr double kSnrFeatureScale = 1.0 / 20.0;

/// Generator/discriminator pair imitating the channel's input-to-output law. With
/// conditioned_on_pilot == false the pilot is not wired into either network (the GAN-SC baseline).
template <class T>
struct ChannelSurrogate {
  SurrogateArch arch;
  int symbols = 256;
  LossMode loss_mode = LossMode::standard_hinge;
  bool conditioned_on_pilot = true;
  nn::Sequential<T> generator{"generator"};
  nn::Sequential<T> discriminator{"discriminator"};
  nn::Adam<T> generator_opt, discriminator_opt;
  RngStream latent;                   // z draws, owned by this surrogate
  std::int64_t generate_calls = 0;    // evaluation tripwire
  std::int64_t updates = 0;           // completed train_gan_step calls

  static ChannelSurrogate create(const SurrogateArch& arch, int symbols, LossMode mode, bool conditioned,
                                 std::uint64_t seed) {
    ChannelSurrogate s;
    s.arch = arch;
    s.symbols = symbols;
    s.loss_mode = mode;
    s.conditioned_on_pilot = conditioned;
    s.latent = RngStream(seed, "gan/latent");
    const int pilot = conditioned ? 2 : 0;

    int in = pilot + arch.noise_dim + 1;
    for (std::size_t i = 0; i < arch.generator_filters.size(); ++i) {
      const int k = arch.generator_kernels[i];
      s.generator.template add<nn::Conv2d<T>>(in, arch.generator_filters[i], nn::ConvGeometry{1, k, 1, 1, 0, k / 2},
                                              "g" + std::to_string(i));
      if (i + 1 < arch.generator_filters.size()) s.generator.template add<nn::ActivationLayer<T>>(nn::Activation::relu);
      in = arch.generator_filters[i];
    }
    if (in != 2) throw ContractError("generator must end with 2 channels (re, im)");

    in = pilot + 2 + 1;
    for (std::size_t i = 0; i < arch.discriminator_filters.size(); ++i) {
      const int k = arch.discriminator_kernels[i];
      s.discriminator.template add<nn::Conv2d<T>>(in, arch.discriminator_filters[i], nn::ConvGeometry{1, k, 1, 1, 0, k / 2},
                                                  "d" + std::to_string(i));
      s.discriminator.template add<nn::ActivationLayer<T>>(nn::Activation::relu);
      in = arch.discriminator_filters[i];
    }
    s.discriminator.template add<nn::Flatten<T>>();
    s.discriminator.template add<nn::Dense<T>>(in * symbols, arch.dense_width, "d_dense");
    s.discriminator.template add<nn::ActivationLayer<T>>(nn::Activation::relu);
    s.discriminator.template add<nn::Dense<T>>(arch.dense_width, 1, "d_head");

    RngStream init(seed, "init/surrogate");
    detail::initialize(s.generator, init, 2.0);
    detail::initialize(s.discriminator, init, 2.0);
    return s;
  }

  std::vector<T> flat_weights() {
    auto g = nn::flatten_values(generator);
    auto d = nn::flatten_values(discriminator);
    g.insert(g.end(), d.begin(), d.end());
    return g;
  }
};

/// Generator/discriminator conditioning: the locally known transmit block, latent noise and SNR.
template <class T>
struct ConditionInput {
  SymbolBlock<T> pilot;
  Tensor<T> z;  // [noise_dim][B][1][N], fresh per generator call
  double snr_db = 0.0;
};

template <class T>
ConditionInput<T> make_condition(ChannelSurrogate<T>& s, const SymbolBlock<T>& pilot, double snr_db) {
  ConditionInput<T> c{pilot, Tensor<T>(Shape{s.arch.noise_dim, pilot.batch(), 1, pilot.symbols()}), snr_db};
  for (auto& v : c.z.storage()) v = static_cast<T>(s.latent.normal());
  return c;
}

namespace detail {

template <class T>
Tensor<T> snr_plane(int batch, int symbols, double snr_db) {
  return Tensor<T>(Shape{1, batch, 1, symbols}, static_cast<T>(snr_db * kSnrFeatureScale));
}

template <class T>
Tensor<T> generator_input(const ChannelSurrogate<T>& s, const ConditionInput<T>& c) {
  const auto snr = snr_plane<T>(c.pilot.batch(), c.pilot.symbols(), c.snr_db);
  if (c.z.channels() != s.arch.noise_dim || c.z.batch() != c.pilot.batch() || c.z.width() != c.pilot.symbols())
    throw ContractError("latent noise does not match the pilot block");
  if (s.conditioned_on_pilot) return concat_channels<T>({&c.pilot.iq, &c.z, &snr});
  return concat_channels<T>({&c.z, &snr});
}

template <class T>
Tensor<T> discriminator_input(const ChannelSurrogate<T>& s, const SymbolBlock<T>& pilot, const SymbolBlock<T>& candidate,
                              double snr_db) {
  if (candidate.batch() != pilot.batch() || candidate.symbols() != pilot.symbols())
    throw ContractError("candidate block does not match the pilot");
  const auto snr = snr_plane<T>(pilot.batch(), pilot.symbols(), snr_db);
  if (s.conditioned_on_pilot) return concat_channels<T>({&pilot.iq, &candidate.iq, &snr});
  return concat_channels<T>({&candidate.iq, &snr});
}

template <class T>
double mean_of(std::span<const T> v) {
  double acc = 0.0;
  for (T x : v) acc += static_cast<double>(x);
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

}  // namespace detail

/// Synthetic channel output y_hat for the condition; differentiable in the generator weights
/// and in the pilot.
template <class T>
SymbolBlock<T> generate(ChannelSurrogate<T>& s, const ConditionInput<T>& c) {
  if (c.pilot.symbols() != s.symbols) throw ContractError("pilot must carry " + std::to_string(s.symbols) + " symbols");
  ++s.generate_calls;
  return SymbolBlock<T>(s.generator.forward(detail::generator_input(s, c)), 1.0);
}

/// Backward through the last generate(). Returns d/d(pilot); zero when the pilot is not wired in.
template <class T>
SymbolBlock<T> generate_backward(ChannelSurrogate<T>& s, const SymbolBlock<T>& grad_out, bool params) {
  auto g = s.generator.backward(grad_out.iq, nn::BackwardMode{params, s.conditioned_on_pilot});
  if (!s.conditioned_on_pilot) return SymbolBlock<T>(grad_out.batch(), grad_out.symbols());
  return SymbolBlock<T>(slice_channels(g, 0, 2));
}

/// One real score per batch item.
template <class T>
std::vector<T> discriminate(ChannelSurrogate<T>& s, const ConditionInput<T>& c, const SymbolBlock<T>& candidate) {
  const auto out = s.discriminator.forward(detail::discriminator_input(s, c.pilot, candidate, c.snr_db));
  return {out.storage().begin(), out.storage().end()};
}

/// mean(max(1 - s, 0)) over fake scores (both loss modes).
template <class T>
double generator_loss(std::span<const T> scores_fake) {
  double acc = 0.0;
  for (T s : scores_fake) acc += std::max(0.0, 1.0 - static_cast<double>(s));
  return scores_fake.empty() ? 0.0 : acc / static_cast<double>(scores_fake.size());
}

template <class T>
std::vector<T> generator_loss_grad(std::span<const T> scores_fake) {
  std::vector<T> g(scores_fake.size(), T{});
  const T inv = static_cast<T>(1.0 / static_cast<double>(scores_fake.size()));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (1.0 - static_cast<double>(scores_fake[i]) > 0.0) ? -inv : T{};
  return g;
}

/// paper_literal: mean(-s_real - max(1 - s_fake, 0)).
/// standard_hinge: mean(max(0, 1 - s_real)) + mean(max(0, 1 + s_fake)).
template <class T>
double discriminator_loss(std::span<const T> real, std::span<const T> fake, LossMode mode) {
  if (real.size() != fake.size()) throw ContractError("real and fake score lists differ in length");
  if (real.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < real.size(); ++i) {
    const double r = real[i], f = fake[i];
    if (mode == LossMode::paper_literal) acc += -r - std::max(0.0, 1.0 - f);
    else acc += std::max(0.0, 1.0 - r) + std::max(0.0, 1.0 + f);
  }
  return acc / static_cast<double>(real.size());
}

/// Gradients of discriminator_loss with respect to (real, fake) scores.
template <class T>
std::pair<std::vector<T>, std::vector<T>> discriminator_loss_grad(std::span<const T> real, std::span<const T> fake,
                                                                  LossMode mode) {
  const std::size_t n = real.size();
  const T inv = static_cast<T>(1.0 / static_cast<double>(n));
  std::vector<T> gr(n, T{}), gf(n, T{});
  for (std::size_t i = 0; i < n; ++i) {
    const double r = real[i], f = fake[i];
    if (mode == LossMode::paper_literal) {
      gr[i] = -inv;
      gf[i] = (1.0 - f > 0.0) ? inv : T{};
    } else {
      gr[i] = (1.0 - r > 0.0) ? -inv : T{};
      gf[i] = (1.0 + f > 0.0) ? inv : T{};
    }
  }
  return {gr, gf};
}

struct GanLossRecord {
  double generator_loss = 0.0;
  double discriminator_loss = 0.0;
};

/// Generator sub-step: one update of the generator against the frozen discriminator.
template <class T>
double generator_update(ChannelSurrogate<T>& s, const SymbolBlock<T>& pilot, double snr_db, double lr, std::int64_t step) {
  const int B = pilot.batch();
  auto cond = make_condition(s, pilot, snr_db);
  const auto fake = generate(s, cond);
  const auto scores = discriminate(s, cond, fake);
  const double loss = generator_loss<T>(scores);
  if (!std::isfinite(loss)) throw TrainingFault(step, "non-finite generator loss");
  const auto g = generator_loss_grad<T>(scores);
  auto gin = s.discriminator.backward(Tensor<T>(Shape{1, B, 1, 1}, g), nn::BackwardMode{false, true});
  const int off = s.conditioned_on_pilot ? 2 : 0;
  s.generator.zero_grad();
  s.generator.backward(slice_channels(gin, off, 2), nn::BackwardMode{true, false});
  s.generator_opt.step(s.generator.parameters(), lr);
  return loss;
}

/// Discriminator sub-step against the frozen generator on a fresh latent draw. Real and fake
/// items share one pass (no cross-item coupling in D).
template <class T>
double discriminator_update(ChannelSurrogate<T>& s, const SymbolBlock<T>& pilot, const SymbolBlock<T>& real_y,
                            double snr_db, double lr, std::int64_t step) {
  const int B = pilot.batch();
  auto cond = make_condition(s, pilot, snr_db);
  const auto fake = generate(s, cond);
  const auto in_real = detail::discriminator_input(s, pilot, real_y, snr_db);
  const auto in_fake = detail::discriminator_input(s, pilot, fake, snr_db);
  const auto out = s.discriminator.forward(concat_batch(in_real, in_fake));
  std::span<const T> all(out.data(), out.size());
  const auto sr = all.subspan(0, static_cast<std::size_t>(B));
  const auto sf = all.subspan(static_cast<std::size_t>(B));
  const double loss = discriminator_loss<T>(sr, sf, s.loss_mode);
  if (!std::isfinite(loss)) throw TrainingFault(step, "non-finite discriminator loss");
  auto [gr, gf] = discriminator_loss_grad<T>(sr, sf, s.loss_mode);
  gr.insert(gr.end(), gf.begin(), gf.end());
  s.discriminator.zero_grad();
  s.discriminator.backward(Tensor<T>(Shape{1, 2 * B, 1, 1}, std::move(gr)), nn::BackwardMode{true, false});
  s.discriminator_opt.step(s.discriminator.parameters(), lr);
  return loss;
}

/// One round of the alternating scheme: generator update, then discriminator update. Only the
/// surrogate's own weights move; the pilot is treated as data.
template <class T>
GanLossRecord train_gan_step(ChannelSurrogate<T>& s, const SymbolBlock<T>& pilot, const SymbolBlock<T>& real_y,
                             double snr_db, double lr, std::int64_t step) {
  GanLossRecord rec;
  rec.generator_loss = generator_update(s, pilot, snr_db, lr, step);
  rec.discriminator_loss = discriminator_update(s, pilot, real_y, snr_db, lr, step);
  ++s.updates;
  return rec;
}

}  // namespace twsc
