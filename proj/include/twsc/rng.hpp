#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>

namespace twsc {

using Engine = std::mt19937_64;

/// Stable 64-bit tag for a stream name (FNV-1a).
constexpr std::uint64_t stream_tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent engine for (seed, stream name, index). Different names never share state,
/// so weight init, shuffling, channel noise and GAN latents can be reseeded in isolation.
inline Engine make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  const std::uint64_t tag = stream_tag(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Engine(seq);
}

/// Standard normal draws via Box-Muller on the raw engine output, so sequences do not
/// depend on the standard library's distribution implementation.
class Gaussian {
 public:
  template <class Eng>
  double operator()(Eng& eng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform(eng);
    } while (u1 <= 0.0);
    const double u2 = uniform(eng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <class Eng>
  static double uniform(Eng& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Engine plus its Gaussian cache; what operations mean by an "rng stream".
struct RngStream {
  Engine engine;
  Gaussian gauss;

  RngStream() = default;
  explicit RngStream(Engine e) : engine(std::move(e)) {}
  RngStream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0)
      : engine(make_stream(seed, name, index)) {}

  double normal() { return gauss(engine); }
  double uniform() { return Gaussian::uniform(engine); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the draw unbiased and implementation independent.
    const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} - n + 1) % n;
    for (;;) {
      const std::uint64_t r = engine();
      if (r >= limit) return r % n;
    }
  }
};

}  // namespace twsc
