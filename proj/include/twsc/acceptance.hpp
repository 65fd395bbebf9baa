#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "twsc/channel.hpp"
#include "twsc/harness.hpp"
#include "twsc/metrics.hpp"
#include "twsc/reference.hpp"
#include "twsc/training.hpp"

namespace twsc::acceptance {

enum class Verdict { pass, fail, skipped };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    case Verdict::skipped: return "SKIP";
  }
  return "?";
}

struct CriterionResult {
  int id = 0;
  std::string name;
  Verdict verdict = Verdict::fail;
  std::string detail;
  nlohmann::json measured = nlohmann::json::object();

  std::string line() const {
    return "criterion " + std::to_string(id) + " [" + name + "]: " + to_string(verdict) + (detail.empty() ? "" : " - " + detail);
  }
};

inline nlohmann::json to_json(const CriterionResult& r) {
  return {{"id", r.id}, {"name", r.name}, {"verdict", to_string(r.verdict)}, {"detail", r.detail}, {"measured", r.measured}};
}

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream o;
  o.precision(6);
  o << v;
  return o.str();
}

inline CriterionResult make(int id, std::string name) {
  CriterionResult r;
  r.id = id;
  r.name = std::move(name);
  return r;
}

inline void fail(CriterionResult& r, const std::string& why) {
  r.verdict = Verdict::fail;
  r.detail += (r.detail.empty() ? "" : "; ") + why;
}

}  // namespace detail

// ---- 1: no feedback ----

/// Reads a finished twsc run directory: no gradient ever crossed either link, and the forward
/// payload counter only moves during stage one (one block per direction per step).
inline CriterionResult check_no_feedback(const fs::path& run_dir) {
  auto r = detail::make(1, "no-feedback");
  const auto rec = read_json(run_dir / "run.json");
  const auto metrics = read_csv(run_dir / "metrics.csv");
  r.verdict = Verdict::pass;
  if (rec.at("status") != "completed") detail::fail(r, "run status is " + rec.at("status").get<std::string>());
  const std::int64_t steps = rec.at("steps").get<std::int64_t>();
  std::int64_t backward = 0, forward = 0;
  for (const char* dir : {"A->B", "B->A"}) {
    const auto& a = rec.at("audits").at(dir);
    backward += a.at("backward_gradient_count").get<std::int64_t>();
    forward += a.at("forward_payload_count").get<std::int64_t>();
    if (a.at("forward_payload_count").get<std::int64_t>() != steps)
      detail::fail(r, std::string(dir) + " carried " + a.at("forward_payload_count").dump() + " payloads over " +
                          std::to_string(steps) + " steps");
  }
  if (backward != 0) detail::fail(r, std::to_string(backward) + " gradients crossed the link");

  // Within a step the rx rows are logged after stage one, the tx rows after both stage-two
  // updates; equal counters mean stage two sent nothing.
  const auto step_c = metrics.column("step"), mode_c = metrics.column("mode"), fc = metrics.column("forward_payload_count");
  std::map<std::string, std::string> after_stage1;
  std::int64_t stage2_rows = 0, stage2_added = 0;
  for (const auto& row : metrics.rows) {
    if (row[mode_c] == "rx") after_stage1[row[step_c]] = row[fc];
    if (row[mode_c] == "tx") {
      ++stage2_rows;
      const auto it = after_stage1.find(row[step_c]);
      if (it == after_stage1.end()) detail::fail(r, "tx row without a stage-one row at step " + row[step_c]);
      else stage2_added += std::stoll(row[fc]) - std::stoll(it->second);
    }
  }
  if (stage2_rows != 2 * steps) detail::fail(r, "expected " + std::to_string(2 * steps) + " stage-two rows, found " + std::to_string(stage2_rows));
  if (stage2_added != 0) detail::fail(r, "stage two added " + std::to_string(stage2_added) + " forward payloads");
  r.measured = {{"steps", steps}, {"backward_gradient_count", backward}, {"forward_payload_count", forward},
                {"stage2_steps", stage2_rows}, {"stage2_forward_payloads", stage2_added}};
  if (r.verdict == Verdict::pass)
    r.detail = "backward gradients 0, forward payloads " + std::to_string(forward) + " = 2 x " + std::to_string(steps) +
               " stage-one steps, stage two added 0 over " + std::to_string(stage2_rows) + " node updates";
  return r;
}

// ---- 2: weight reciprocity ----

struct ReciprocityOptions {
  int steps = 200;
  int batch = 8;
  ChannelKind channel = ChannelKind::awgn;
  std::uint64_t seed = 1;
};

/// Twin nodes on the standard networks must stay bitwise equal; a node B that shuffles with
/// another seed must drift.
inline CriterionResult check_reciprocity(const Dataset& data, const ReciprocityOptions& o = {}) {
  auto r = detail::make(2, "weight-reciprocity");
  ExperimentConfig cfg;
  cfg.system_kind = SystemKind::twsc;
  cfg.channel_kind = o.channel;
  cfg.batch_size = o.batch;
  cfg.seed = o.seed;
  TrainOptions opt;
  opt.max_steps = o.steps;
  opt.evaluate_epochs = false;
  cfg.epochs = std::max(1, o.steps * o.batch / training_pool_size(data, cfg) + 1);

  auto twin = TrainRun<float>::standard(cfg);
  train_system(twin, data, {}, opt);
  const double same = weight_reciprocity_check(twin);
  opt.perturb_node_b_order = true;
  auto control = TrainRun<float>::standard(cfg);
  train_system(control, data, {}, opt);
  const double perturbed = weight_reciprocity_check(control);

  r.measured = {{"steps", twin.step}, {"batch", o.batch}, {"max_abs_discrepancy", same}, {"control_discrepancy", perturbed}};
  r.verdict = Verdict::pass;
  if (twin.step != o.steps) detail::fail(r, "ran " + std::to_string(twin.step) + " steps");
  if (same != 0.0) detail::fail(r, "twin discrepancy " + detail::fmt(same));
  if (!(perturbed > 0.0)) detail::fail(r, "negative control did not drift");
  if (r.verdict == Verdict::pass)
    r.detail = "max |wA - wB| = 0 after " + std::to_string(twin.step) + " steps; perturbed order gives " + detail::fmt(perturbed);
  return r;
}

// ---- 3: convergence within 20 epochs ----

/// Needs a run with at least 100 epochs of per-epoch evaluation; anything shorter is skipped.
inline CriterionResult check_convergence(const fs::path& run_dir) {
  auto r = detail::make(3, "convergence-20-epochs");
  const auto t = read_csv(run_dir / "metrics.csv");
  const auto ec = t.column("epoch"), mc = t.column("mode"), dc = t.column("direction"), sc = t.column("ssim");
  std::map<int, std::map<std::string, double>> ssim;
  for (const auto& row : t.rows)
    if (row[mc] == "eval") ssim[std::stoi(row[ec])][row[dc]] = parse_cell(row[sc]);
  const int last = ssim.empty() ? 0 : ssim.rbegin()->first;
  if (last < 100 || !ssim.count(20)) {
    r.verdict = Verdict::skipped;
    r.detail = "needs a full-scale run with 100 evaluated epochs; " + run_dir.string() + " has " + std::to_string(last);
    return r;
  }
  r.verdict = Verdict::pass;
  const double s20 = ssim[20]["avg"], s100 = ssim[100]["avg"];
  if (!(s20 >= 0.95 * s100)) detail::fail(r, "SSIM(20) " + detail::fmt(s20) + " < 0.95 x SSIM(100) " + detail::fmt(s100));
  double worst_gap = 0.0;
  for (auto& [epoch, d] : ssim) {
    if (!d.count("A->B") || !d.count("B->A")) {
      detail::fail(r, "epoch " + std::to_string(epoch) + " lacks a direction");
      continue;
    }
    worst_gap = std::max(worst_gap, std::abs(d["A->B"] - d["B->A"]));
  }
  if (!(worst_gap < 0.01)) detail::fail(r, "direction gap " + detail::fmt(worst_gap));
  r.measured = {{"ssim_epoch20", s20}, {"ssim_epoch100", s100}, {"max_direction_gap", worst_gap}};
  if (r.verdict == Verdict::pass)
    r.detail = "SSIM(20)/SSIM(100) = " + detail::fmt(s20 / s100) + ", max direction gap " + detail::fmt(worst_gap);
  return r;
}

// ---- 4: baseline ordering ----

inline constexpr double kPsnrMarginDb = 0.5;
inline constexpr double kSsimMargin = 0.01;  // SSIM counterpart of the PSNR margin

/// rows: evaluation rows of all three systems. AWGN-trained systems on AWGN are ordered by
/// PSNR, Rayleigh-trained on Rayleigh by SSIM. With allow_partial, SNR points missing from
/// the grid are listed instead of failing.
inline CriterionResult check_ordering(const std::vector<MetricRow>& rows, bool allow_partial = false) {
  auto r = detail::make(4, "baseline-ordering");
  const std::vector<double> snrs{0, 5, 10, 15};
  auto find = [&](const std::string& sys, const std::string& ch, double snr) -> const MetricRow* {
    for (const auto& m : rows)
      if (m.system_kind == sys && m.train_channel == ch && m.eval_channel == ch && m.direction == "avg" &&
          std::abs(m.snr_db - snr) < 1e-9)
        return &m;
    return nullptr;
  };
  r.verdict = Verdict::pass;
  std::vector<double> missing;
  int compared = 0;
  for (const std::string ch : {"awgn", "rayleigh"}) {
    const bool by_psnr = ch == "awgn";
    for (double snr : snrs) {
      const auto *j = find("jscc", ch, snr), *t = find("twsc", ch, snr), *g = find("gansc", ch, snr);
      if (!j || !t || !g) {
        missing.push_back(snr);
        continue;
      }
      ++compared;
      const double vj = by_psnr ? j->psnr_db : j->ssim, vt = by_psnr ? t->psnr_db : t->ssim, vg = by_psnr ? g->psnr_db : g->ssim;
      const double margin = by_psnr ? kPsnrMarginDb : kSsimMargin;
      const std::string what = std::string(by_psnr ? "PSNR" : "SSIM") + " " + ch + " @" + detail::fmt(snr) + " dB";
      r.measured[what] = {{"jscc", vj}, {"twsc", vt}, {"gansc", vg}};
      if (!(vj >= vt - margin)) detail::fail(r, what + ": jscc " + detail::fmt(vj) + " < twsc " + detail::fmt(vt) + " - " + detail::fmt(margin));
      if (!(vt >= vg)) detail::fail(r, what + ": twsc " + detail::fmt(vt) + " < gansc " + detail::fmt(vg));
    }
  }
  if (compared == 0) {
    r.verdict = Verdict::skipped;
    r.detail = "no evaluation rows for all three systems at SNR 0/5/10/15 dB";
    return r;
  }
  if (!missing.empty()) {
    if (!allow_partial) detail::fail(r, "missing SNR points in the evaluation grid");
    else r.detail += (r.detail.empty() ? "" : "; ") + std::string("partial grid: ") + std::to_string(compared) + " of 8 comparisons";
  }
  if (r.verdict == Verdict::pass && r.detail.empty()) r.detail = "jscc >= twsc - margin and twsc >= gansc at all 8 points";
  return r;
}

// ---- 5: channel calibration ----

inline CriterionResult check_channel_calibration(std::uint64_t seed = 1, int samples = 100000) {
  auto r = detail::make(5, "channel-calibration");
  r.verdict = Verdict::pass;
  double worst_awgn = 0.0;
  for (double snr : {0.0, 5.0, 10.0, 15.0, 20.0}) {
    RngStream noise(seed, "acceptance/awgn", static_cast<std::uint64_t>(snr));
    SymbolBlock<double> zero(1, samples);
    const auto y = apply_awgn(zero, snr, noise);
    double p = 0.0;
    for (int i = 0; i < samples; ++i) p += std::norm(y.at(0, i));
    const double rel = std::abs(p / samples / noise_variance(snr) - 1.0);
    worst_awgn = std::max(worst_awgn, rel);
    r.measured["awgn_relative_error_" + detail::fmt(snr) + "dB"] = rel;
  }
  if (!(worst_awgn <= 0.01)) detail::fail(r, "AWGN variance off by " + detail::fmt(100 * worst_awgn) + "%");

  RngStream fading(seed, "acceptance/rayleigh");
  const auto h = sample_reciprocal_rayleigh(fading, samples).first.fading;
  std::vector<double> g(h.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) mean += g[i] = std::norm(h[i]);
  mean /= static_cast<double>(g.size());
  std::sort(g.begin(), g.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double cdf = 1.0 - std::exp(-g[i]);
    const double n = static_cast<double>(g.size());
    ks = std::max({ks, std::abs(cdf - static_cast<double>(i) / n), std::abs(cdf - static_cast<double>(i + 1) / n)});
  }
  if (!(std::abs(mean - 1.0) <= 0.01)) detail::fail(r, "E|h|^2 = " + detail::fmt(mean));
  if (!(ks < 0.01)) detail::fail(r, "KS statistic " + detail::fmt(ks));
  r.measured["rayleigh_mean_gain"] = mean;
  r.measured["rayleigh_ks"] = ks;
  if (r.verdict == Verdict::pass)
    r.detail = "AWGN variance within " + detail::fmt(100 * worst_awgn) + "%, E|h|^2 = " + detail::fmt(mean) + ", KS = " + detail::fmt(ks);
  return r;
}

// ---- 6: surrogate fidelity ----

/// Residual y_hat - x of a surrogate at one SNR: |mean| and variance per complex symbol.
struct ResidualStats {
  double mean_magnitude = 0.0;
  double variance = 0.0;
};

template <class T>
ResidualStats residual_stats(ChannelSurrogate<T>& s, const SymbolBlock<T>& pilot, double snr_db) {
  const auto y = generate(s, make_condition(s, pilot, snr_db));
  std::complex<double> mean{};
  const double n = static_cast<double>(pilot.batch()) * pilot.symbols();
  for (int b = 0; b < pilot.batch(); ++b)
    for (int i = 0; i < pilot.symbols(); ++i) mean += y.at(b, i) - pilot.at(b, i);
  mean /= n;
  double var = 0.0;
  for (int b = 0; b < pilot.batch(); ++b)
    for (int i = 0; i < pilot.symbols(); ++i) var += std::norm(y.at(b, i) - pilot.at(b, i) - mean);
  return {std::abs(mean), var / n};
}

/// Unit-power pilot block with i.i.d. Gaussian symbols.
template <class T>
SymbolBlock<T> random_pilots(int batch, int symbols, RngStream& rng) {
  SymbolBlock<T> x(batch, symbols);
  for (auto& v : x.iq.storage()) v = static_cast<T>(rng.normal());
  return normalize_power(x).block;
}

struct FidelityOptions {
  int steps = 1500;
  int batch = 32;
  double snr_db = 10.0;
  double learning_rate = 1e-3;
  int probe_batch = 64;
  std::uint64_t seed = 1;
};

/// Fidelity thresholds applied to a residual measurement.
inline void judge_residual(CriterionResult& r, const ResidualStats& st, double snr_db) {
  const double target = noise_variance(snr_db);
  if (!(st.mean_magnitude <= 0.05)) detail::fail(r, "|mean residual| " + detail::fmt(st.mean_magnitude) + " > 0.05");
  if (!(std::abs(st.variance / target - 1.0) <= 0.2))
    detail::fail(r, "residual variance " + detail::fmt(st.variance) + " outside " + detail::fmt(target) + " +-20%");
}

/// The pilot-free ablation must ignore its pilot exactly. s1 and s2 are identical surrogates
/// (same weights and latent stream), so only the pilot differs between the two probes.
template <class T>
bool ablation_ignores_pilot(ChannelSurrogate<T>& s1, ChannelSurrogate<T>& s2, const SymbolBlock<T>& pilot, double snr_db) {
  auto other = pilot;
  for (auto& v : other.iq.storage()) v = static_cast<T>(-2.0 * static_cast<double>(v) + 0.5);
  const auto y1 = generate(s1, make_condition(s1, pilot, snr_db));
  const auto y2 = generate(s2, make_condition(s2, other, snr_db));
  return y1.iq.storage() == y2.iq.storage();
}

/// Trains a fresh standard SP-CGAN on the AWGN channel at one SNR and measures its residual;
/// then checks a GAN-SC surrogate for exact pilot independence.
inline CriterionResult check_surrogate_fidelity(const FidelityOptions& o = {}) {
  auto r = detail::make(6, "surrogate-fidelity");
  auto s = ChannelSurrogate<float>::create(SurrogateArch::standard(), 256, LossMode::standard_hinge, true, o.seed);
  RngStream pilots(o.seed, "acceptance/pilots"), noise(o.seed, "acceptance/noise");
  ExperimentConfig schedule;
  schedule.learning_rate = o.learning_rate;
  for (int t = 0; t < o.steps; ++t) {
    const auto x = random_pilots<float>(o.batch, 256, pilots);
    const auto y = apply_fading(x, awgn_realization(o.batch, o.snr_db), noise);
    train_gan_step(s, x, y, o.snr_db, lr_at(schedule, t), t);
  }
  RngStream probe(o.seed, "acceptance/probe");
  const auto px = random_pilots<float>(o.probe_batch, 256, probe);
  const auto st = residual_stats(s, px, o.snr_db);
  r.verdict = Verdict::pass;
  judge_residual(r, st, o.snr_db);

  auto g1 = ChannelSurrogate<float>::create(SurrogateArch::standard(), 256, LossMode::standard_hinge, false, o.seed);
  auto g2 = ChannelSurrogate<float>::create(SurrogateArch::standard(), 256, LossMode::standard_hinge, false, o.seed);
  const bool independent = ablation_ignores_pilot(g1, g2, px, o.snr_db);
  if (!independent) detail::fail(r, "GAN-SC output depends on the pilot");
  r.measured = {{"steps", o.steps}, {"batch", o.batch}, {"residual_mean_magnitude", st.mean_magnitude},
                {"residual_variance", st.variance}, {"target_variance", noise_variance(o.snr_db)},
                {"gansc_pilot_independent", independent}};
  if (r.verdict == Verdict::pass)
    r.detail = "|mean| " + detail::fmt(st.mean_magnitude) + ", variance " + detail::fmt(st.variance) + " (target " +
               detail::fmt(noise_variance(o.snr_db)) + ") after " + std::to_string(o.steps) +
               " steps; GAN-SC output bit-identical under pilot perturbation";
  return r;
}

// ---- 7: metric oracles ----

inline CriterionResult check_metric_oracles(std::uint64_t seed = 1) {
  auto r = detail::make(7, "metric-oracles");
  RngStream rng(seed, "acceptance/metrics");
  const int B = 6, H = 28, W = 28;
  Tensor<double> a(Shape{1, B, H, W}), b(Shape{1, B, H, W});
  for (auto& v : a.storage()) v = rng.uniform();
  for (int k = 0; k < B; ++k) {
    const double sd = 0.02 + 0.1 * k;
    for (int i = 0; i < H * W; ++i) {
      const std::size_t at = a.index(0, k) + static_cast<std::size_t>(i);
      b.data()[at] = std::clamp(a.data()[at] + sd * rng.normal(), 0.0, 1.0);
    }
  }
  const auto p = psnr(a, b);
  const auto s = ssim(a, b);
  double psnr_err = 0.0, ssim_err = 0.0;
  for (int k = 0; k < B; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    psnr_err = std::max(psnr_err, std::abs(p.per_image[kk].db - reference::psnr(a.data() + a.index(0, k), b.data() + b.index(0, k), H, W)));
    ssim_err = std::max(ssim_err, std::abs(s.per_image[kk] - reference::ssim(a.data() + a.index(0, k), b.data() + b.index(0, k), H, W)));
  }
  const auto pi = psnr(a, a);
  const auto si = ssim(a, a);
  double ident = 0.0;
  for (double v : si.per_image) ident = std::max(ident, std::abs(v - 1.0));
  r.verdict = Verdict::pass;
  if (!(psnr_err <= 1e-6)) detail::fail(r, "PSNR differs from brute force by " + detail::fmt(psnr_err) + " dB");
  if (!(ssim_err <= 1e-4)) detail::fail(r, "SSIM differs from the sliding-window reference by " + detail::fmt(ssim_err));
  if (pi.exact_count != B) detail::fail(r, "identical images not flagged exact");
  if (!(ident <= 1e-9)) detail::fail(r, "SSIM(a,a) differs from 1 by " + detail::fmt(ident));
  r.measured = {{"psnr_max_abs_error_db", psnr_err}, {"ssim_max_abs_error", ssim_err}, {"identity_ssim_error", ident},
                {"identity_exact_count", pi.exact_count}};
  if (r.verdict == Verdict::pass)
    r.detail = "PSNR error " + detail::fmt(psnr_err) + " dB, SSIM error " + detail::fmt(ssim_err) + ", identities exact";
  return r;
}

// ---- 8: numerical soundness ----

/// Autodiff vs central differences (step 1e-4; smaller steps are dominated by cancellation in the
/// loss) for the end-to-end MSE of a tiny double-precision transceiver
/// through a fixed fading realization, and unit power of every block a short standard run sends.
inline CriterionResult check_numerics(const Dataset& data, std::uint64_t seed = 1) {
  auto r = detail::make(8, "numerical-soundness");
  RngStream rng(seed, "acceptance/fd");
  auto node = NodeState<double>::create(NodeId::A, TransceiverArch::tiny(), seed);
  for (auto* net : node.networks())
    for (auto* p : net->parameters())
      for (auto& v : p->value) v += rng.uniform(-0.05, 0.05);
  Tensor<double> m(Shape{1, 2, 8, 8});
  for (auto& v : m.storage()) v = rng.uniform();
  auto real = sample_reciprocal_rayleigh(rng, 2, 10.0).first;
  const RngStream noise0(seed, "acceptance/fd-noise");

  auto objective = [&] {
    RngStream noise = noise0;
    DifferentiableChannel<double> ch;
    const auto out = receive(node, ch.forward(transmit(node, m).x, real, noise));
    return mse(out, m);
  };
  for (auto* net : node.networks()) net->zero_grad();
  RngStream noise = noise0;
  DifferentiableChannel<double> ch;
  const auto code = transmit(node, m);
  const auto out = receive(node, ch.forward(code.x, real, noise));
  transmit_backward(node, code, ch.backward(receive_backward(node, mse_grad(out, m), true)));

  double worst = 0.0;
  for (auto* net : node.networks())
    for (auto* p : net->parameters()) {
      std::vector<double> fd(p->value.size());
      for (std::size_t i = 0; i < fd.size(); ++i) fd[i] = reference::central_difference(objective, p->value[i], 1e-4);
      worst = std::max(worst, reference::relative_error(p->grad, fd));
    }

  ExperimentConfig cfg;
  cfg.batch_size = 8;
  cfg.seed = seed;
  TrainOptions opt;
  opt.max_steps = 4;
  opt.evaluate_epochs = false;
  auto run = TrainRun<float>::standard(cfg);
  double direct = 0.0;
  for (int k = 0; k < 4; ++k) {
    std::vector<int> idx(8);
    for (int i = 0; i < 8; ++i) idx[static_cast<std::size_t>(i)] = 8 * k + i;
    direct = std::max(direct, std::abs(transmit(run.node_a, gather_images<float>(data.test, idx)).x.measured_power() - 1.0));
  }
  train_system(run, data, {}, opt);
  const double linked = std::max(run.link_ab.audit().max_power_deviation, run.link_ba.audit().max_power_deviation);

  r.verdict = Verdict::pass;
  if (!(worst <= 1e-3)) detail::fail(r, "gradient relative error " + detail::fmt(worst));
  if (!(std::max(direct, linked) <= kPowerTolerance)) detail::fail(r, "block power deviates by " + detail::fmt(std::max(direct, linked)));
  if (run.forward_payloads() != 8) detail::fail(r, "expected 8 linked blocks, saw " + std::to_string(run.forward_payloads()));
  r.measured = {{"max_gradient_relative_error", worst}, {"max_power_deviation_direct", direct},
                {"max_power_deviation_link", linked}, {"linked_blocks", run.forward_payloads()}};
  if (r.verdict == Verdict::pass)
    r.detail = "max gradient relative error " + detail::fmt(worst) + ", max |power - 1| " + detail::fmt(std::max(direct, linked));
  return r;
}

}  // namespace twsc::acceptance
