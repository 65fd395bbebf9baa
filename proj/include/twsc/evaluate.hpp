#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "twsc/metrics.hpp"
#include "twsc/training.hpp"

namespace twsc {

/// Scores a trained run over the physical channel at each SNR. Two-node systems get one row per
/// direction plus their average; the one-way baseline gets the average row only. Deterministic
/// for a fixed cfg.eval_seed.
template <class T>
MetricTable evaluate_sweep(TrainRun<T>& run, ChannelKind eval_channel, const std::vector<double>& snr_list,
                           const ImageSet& test, int n_images = 0) {
  const auto& cfg = run.config;
  const int count = n_images > 0 ? std::min(n_images, test.count) : test.count;
  const auto calls = [&] {
    std::int64_t n = 0;
    if (run.surrogate_a) n += run.surrogate_a->generate_calls;
    if (run.surrogate_b) n += run.surrogate_b->generate_calls;
    return n;
  };
  const std::int64_t calls_before = calls();

  MetricTable table;
  auto make_row = [&](double snr, const std::string& dir, const LinkQuality& q) {
    return MetricRow{to_string(cfg.system_kind), to_string(cfg.channel_kind), to_string(eval_channel), snr, dir,
                     q.psnr_db, q.ssim, q.n_images, q.exact_count};
  };
  for (std::size_t k = 0; k < snr_list.size(); ++k) {
    const double snr = snr_list[k];
    RngStream fade_ab(cfg.eval_seed, "eval/fading/" + to_string(eval_channel), k), fade_ba = fade_ab;
    RngStream noise_ab(cfg.eval_seed, "eval/noise/A->B/" + to_string(eval_channel), k);
    RngStream noise_ba(cfg.eval_seed, "eval/noise/B->A/" + to_string(eval_channel), k);
    if (cfg.system_kind == SystemKind::jscc) {
      const auto q = evaluate_link(run.node_a, run.node_a, test, count, cfg.batch_size, eval_channel, snr, noise_ab, fade_ab);
      table.rows.push_back(make_row(snr, "avg", q));
      continue;
    }
    const auto ab = evaluate_link(run.node_a, run.node_b, test, count, cfg.batch_size, eval_channel, snr, noise_ab, fade_ab);
    const auto ba = evaluate_link(run.node_b, run.node_a, test, count, cfg.batch_size, eval_channel, snr, noise_ba, fade_ba);
    const LinkQuality avg{0.5 * (ab.psnr_db + ba.psnr_db), 0.5 * (ab.ssim + ba.ssim), ab.n_images + ba.n_images,
                          ab.exact_count + ba.exact_count};
    table.rows.push_back(make_row(snr, "avg", avg));
    table.rows.push_back(make_row(snr, "A->B", ab));
    table.rows.push_back(make_row(snr, "B->A", ba));
  }
  if (calls() != calls_before) throw std::logic_error("evaluation invoked the channel surrogate");
  return table;
}

}  // namespace twsc
