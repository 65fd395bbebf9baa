#pragma once

#include <cmath>

#include "twsc/mnist.hpp"
#include "twsc/rng.hpp"
#include "twsc/sp_cgan.hpp"
#include "twsc/transceiver.hpp"

namespace fixture {

/// Smooth random blobs on size x size images; structured enough for a tiny autoencoder to learn.
inline twsc::Dataset blobs(int train, int test, int size, std::uint64_t seed = 99) {
  twsc::Dataset d;
  twsc::RngStream rng(seed, "fixture/blobs");
  for (auto [set, n] : {std::pair{&d.train, train}, {&d.test, test}}) {
    set->count = n;
    set->rows = set->cols = size;
    set->pixels.resize(static_cast<std::size_t>(n) * size * size);
    for (int k = 0; k < n; ++k) {
      const double cx = rng.uniform(0.25, 0.75) * size, cy = rng.uniform(0.25, 0.75) * size;
      const double r = rng.uniform(0.15, 0.3) * size;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (r * r);
          set->pixels[static_cast<std::size_t>(k) * size * size + static_cast<std::size_t>(y) * size + x] =
              static_cast<float>(std::exp(-d2));
        }
    }
  }
  d.checksum = "fixture";
  return d;
}

/// Tiny transceiver on 12x12 images (large enough for the 11x11 SSIM window).
inline twsc::TransceiverArch small_arch() {
  auto a = twsc::TransceiverArch::tiny();
  a.image_size = 12;
  return a;
}

inline twsc::ExperimentConfig small_config(twsc::SystemKind kind, twsc::ChannelKind channel = twsc::ChannelKind::awgn) {
  twsc::ExperimentConfig c;
  c.system_kind = kind;
  c.channel_kind = channel;
  c.batch_size = 4;
  c.epochs = 2;
  c.learning_rate = 1e-2;
  c.eval_snr_list_db = {0, 10, 20};
  c.test_limit = 8;
  return c;
}

}  // namespace fixture
