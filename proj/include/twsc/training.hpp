#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "twsc/batching.hpp"
#include "twsc/channel.hpp"
#include "twsc/config.hpp"
#include "twsc/metrics.hpp"
#include "twsc/mnist.hpp"
#include "twsc/sp_cgan.hpp"
#include "twsc/transceiver.hpp"

namespace twsc {

/// Inverse-time decay: lr / (1 + decay * t).
inline double lr_at(const ExperimentConfig& cfg, std::int64_t t) {
  if (t < 0) throw ContractError("step index must be >= 0");
  return cfg.learning_rate / (1.0 + cfg.lr_decay * static_cast<double>(t));
}

/// Per-pixel mean squared error of two equally shaped batches.
template <class T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ContractError("mse of mismatched shapes " + a.shape().str() + " vs " + b.shape().str());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    acc += d * d;
  }
  return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}

/// d mse / d a.
template <class T>
Tensor<T> mse_grad(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> g(a.shape());
  const double k = 2.0 / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    g.data()[i] = static_cast<T>(k * (static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  return g;
}

/// Mean of the two link reconstruction errors. rec_at_a is node A's estimate of B's images.
template <class T>
double reciprocal_mse_objective(const Tensor<T>& rec_at_a, const Tensor<T>& images_b, const Tensor<T>& rec_at_b,
                                const Tensor<T>& images_a) {
  return 0.5 * (mse(rec_at_a, images_b) + mse(rec_at_b, images_a));
}

/// One metrics.csv line. psnr/ssim are NaN on training rows.
struct LogRow {
  int epoch = 0;
  std::int64_t step = 0;
  std::string mode;       // gan_g, gan_d, rx, tx, jscc, eval
  std::string direction;  // link the row concerns: A->B, B->A or avg
  double loss = std::numeric_limits<double>::quiet_NaN();
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double ssim = std::numeric_limits<double>::quiet_NaN();
  double snr_db = 0.0;
  double lr = 0.0;
  std::int64_t forward_payload_count = 0;
};

/// Per-epoch summary: mean training reconstruction loss and held-out quality per direction.
struct EpochRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double train_loss = 0.0;
  LinkQuality a_to_b;
  LinkQuality b_to_a;
  LinkQuality average;
};

inline std::string direction_into(NodeId receiver) { return receiver == NodeId::B ? "A->B" : "B->A"; }

/// Everything one training run owns: both nodes, their surrogates, the two link directions and
/// the shared randomness.
template <class T>
struct TrainRun {
  ExperimentConfig config;
  TransceiverArch arch;
  SurrogateArch surrogate_arch;
  NodeState<T> node_a;
  NodeState<T> node_b;
  std::optional<ChannelSurrogate<T>> surrogate_a;  // models what node A receives
  std::optional<ChannelSurrogate<T>> surrogate_b;
  Link<T> link_ab;
  Link<T> link_ba;
  RngStream fading;
  RngStream snr;
  RngStream jscc_noise;
  DifferentiableChannel<T> jscc_channel;
  std::int64_t step = 0;
  std::vector<EpochRecord> metric_log;

  TrainRun(const ExperimentConfig& cfg, const TransceiverArch& a, const SurrogateArch& sa)
      : config(cfg),
        arch(a),
        surrogate_arch(sa),
        node_a(NodeState<T>::create(NodeId::A, a, cfg.seed)),
        node_b(NodeState<T>::create(NodeId::B, a, cfg.seed)),
        link_ab(NodeId::A, NodeId::B, RngStream(cfg.seed, "noise/link", cfg.shared_noise ? 0 : 1)),
        link_ba(NodeId::B, NodeId::A, RngStream(cfg.seed, "noise/link", cfg.shared_noise ? 0 : 2)),
        fading(cfg.seed, "fading"),
        snr(cfg.seed, "snr"),
        jscc_noise(cfg.seed, "noise/jscc") {
    if (cfg.system_kind != SystemKind::jscc) {
      const bool conditioned = cfg.system_kind == SystemKind::twsc;
      surrogate_arch.noise_dim = cfg.noise_dim;
      surrogate_a = ChannelSurrogate<T>::create(surrogate_arch, a.symbol_count(), cfg.loss_mode, conditioned, cfg.seed);
      surrogate_b = ChannelSurrogate<T>::create(surrogate_arch, a.symbol_count(), cfg.loss_mode, conditioned, cfg.seed);
    }
  }

  static TrainRun standard(const ExperimentConfig& cfg) {
    return TrainRun(cfg, TransceiverArch::standard(), SurrogateArch::standard(cfg.noise_dim));
  }

  NodeState<T>& node(NodeId id) { return id == NodeId::A ? node_a : node_b; }
  ChannelSurrogate<T>& surrogate(NodeId id) {
    auto& s = id == NodeId::A ? surrogate_a : surrogate_b;
    if (!s) throw ContractError("this run has no channel surrogate");
    return *s;
  }
  /// The link whose far end is `receiver`.
  Link<T>& link_into(NodeId receiver) { return receiver == NodeId::B ? link_ab : link_ba; }

  std::int64_t forward_payloads() const {
    return link_ab.audit().forward_payload_count + link_ba.audit().forward_payload_count;
  }
  std::int64_t backward_gradients() const {
    return link_ab.audit().backward_gradient_count + link_ba.audit().backward_gradient_count;
  }
};

struct NodeStepLoss {
  double generator = 0.0;
  double discriminator = 0.0;
  double receiver = 0.0;
};

struct StageOneRecord {
  NodeStepLoss at_a;  // losses of node A's receiver side (link B->A)
  NodeStepLoss at_b;
  double objective = 0.0;  // reciprocal MSE over both links
};

namespace detail {

template <class T>
void step_all(nn::Sequential<T>& net, nn::Adam<T>& opt, double lr) {
  opt.step(net.parameters(), lr);
}

/// Receiver update on a block that arrived over the real link. Returns the reconstruction MSE.
template <class T>
double update_receiver(NodeState<T>& node, const SymbolBlock<T>& y, const Tensor<T>& target, double lr) {
  const auto out = receive(node, y);
  const double loss = mse(out, target);
  node.semantic_decoder.zero_grad();
  node.channel_decoder.zero_grad();
  auto g = node.semantic_decoder.backward(mse_grad(out, target), nn::BackwardMode{true, true});
  node.channel_decoder.backward(g, nn::BackwardMode{true, false});
  step_all(node.semantic_decoder, node.semantic_decoder_opt, lr);
  step_all(node.channel_decoder, node.channel_decoder_opt, lr);
  return loss;
}

}  // namespace detail

/// Stage one: both nodes transmit over the real link, then each receiving node trains its
/// surrogate on (local replica of the sender's symbols, received block) and its receiver on the
/// received block. Transmitters only run forward.
template <class T>
StageOneRecord stage1_step(TrainRun<T>& run, const Tensor<T>& batch_a, const Tensor<T>& batch_b, double snr_db) {
  if (run.config.system_kind == SystemKind::jscc) throw ContractError("stage1_step needs a two-stage system");
  if (batch_a.batch() != batch_b.batch()) throw ContractError("both nodes must send equally sized batches");
  const double lr = lr_at(run.config, run.step);
  const auto [r_ab, r_ba] = draw_realizations(run.config.channel_kind, run.fading, batch_a.batch(), snr_db);

  const auto x_a = transmit(run.node_a, batch_a).x;
  const auto x_b = transmit(run.node_b, batch_b).x;
  const auto at_b = run.link_ab.transmit(x_a, r_ab);
  const auto at_a = run.link_ba.transmit(x_b, r_ba);

  StageOneRecord rec;
  auto receive_side = [&](NodeId me, const SymbolBlock<T>& y, const Tensor<T>& remote_images) {
    NodeState<T>& node = run.node(me);
    // The sender's symbols are rebuilt locally from shared data and (reciprocal) weights.
    const auto replica = transmit(node, remote_images).x;
    const auto gan = train_gan_step(run.surrogate(me), replica, y, snr_db, lr, run.step);
    NodeStepLoss l{gan.generator_loss, gan.discriminator_loss, 0.0};
    l.receiver = detail::update_receiver(node, y, remote_images, lr);
    return l;
  };
  rec.at_b = receive_side(NodeId::B, at_b.y, batch_a);
  rec.at_a = receive_side(NodeId::A, at_a.y, batch_b);
  rec.objective = 0.5 * (rec.at_a.receiver + rec.at_b.receiver);
  return rec;
}

/// Stage two at one node: images -> own transmitter -> frozen surrogate -> own frozen receiver
/// -> MSE; only the transmitter moves. Never touches the link.
template <class T>
double stage2_step(TrainRun<T>& run, const Tensor<T>& batch, NodeId id, double snr_db) {
  auto& sur = run.surrogate(id);
  if (sur.updates < 1) throw ContractError("stage2_step before the surrogate was trained");
  NodeState<T>& node = run.node(id);
  const LinkAudit before_ab = run.link_ab.audit(), before_ba = run.link_ba.audit();
  const double lr = lr_at(run.config, run.step);

  const auto code = transmit(node, batch);
  const auto cond = make_condition(sur, code.x, snr_db);
  const auto y_hat = generate(sur, cond);
  const auto out = receive(node, y_hat);
  const double loss = mse(out, batch);

  const auto g_y = receive_backward(node, mse_grad(out, batch), false);
  const auto g_x = generate_backward(sur, g_y, false);
  node.semantic_encoder.zero_grad();
  node.channel_encoder.zero_grad();
  transmit_backward(node, code, g_x);
  detail::step_all(node.semantic_encoder, node.semantic_encoder_opt, lr);
  detail::step_all(node.channel_encoder, node.channel_encoder_opt, lr);

  if (!(run.link_ab.audit() == before_ab) || !(run.link_ba.audit() == before_ba))
    throw FeedbackViolation("link traffic during a node-local stage");
  return loss;
}

/// End-to-end step of the one-way baseline through the differentiable channel.
template <class T>
double jscc_step(TrainRun<T>& run, const Tensor<T>& batch, double snr_db) {
  NodeState<T>& node = run.node_a;
  const double lr = lr_at(run.config, run.step);
  const auto r = draw_realizations(run.config.channel_kind, run.fading, batch.batch(), snr_db).first;
  const auto code = transmit(node, batch);
  const auto y = run.jscc_channel.forward(code.x, r, run.jscc_noise);
  const auto out = receive(node, y);
  const double loss = mse(out, batch);
  for (auto* net : node.networks()) net->zero_grad();
  const auto g_y = receive_backward(node, mse_grad(out, batch), true);
  transmit_backward(node, code, run.jscc_channel.backward(g_y));
  auto nets = node.networks();
  auto opts = node.optimizers();
  for (std::size_t i = 0; i < nets.size(); ++i) detail::step_all(*nets[i], *opts[i], lr);
  return loss;
}

/// Largest |w_A - w_B| over every transceiver and surrogate weight.
template <class T>
double weight_reciprocity_check(TrainRun<T>& run) {
  double worst = 0.0;
  auto compare = [&](const std::vector<T>& a, const std::vector<T>& b) {
    if (a.size() != b.size()) throw ContractError("nodes have different weight counts");
    for (std::size_t i = 0; i < a.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  };
  compare(run.node_a.flat_weights(), run.node_b.flat_weights());
  if (run.surrogate_a && run.surrogate_b) compare(run.surrogate_a->flat_weights(), run.surrogate_b->flat_weights());
  return worst;
}

/// Held-out quality after an epoch, on the training channel at the configured SNR.
template <class T>
EpochRecord evaluate_epoch(TrainRun<T>& run, const Dataset& d, int epoch) {
  const auto& cfg = run.config;
  EpochRecord rec;
  rec.epoch = epoch;
  rec.step = run.step;
  const int count = cfg.test_limit > 0 ? std::min(cfg.test_limit, d.test.count) : d.test.count;
  const auto idx = static_cast<std::uint64_t>(epoch);
  if (cfg.system_kind == SystemKind::jscc) {
    RngStream noise(cfg.eval_seed, "epoch-eval/noise/A->B", idx), fade(cfg.eval_seed, "epoch-eval/fading", idx);
    rec.a_to_b = evaluate_link(run.node_a, run.node_a, d.test, count, cfg.batch_size, cfg.channel_kind, cfg.epoch_eval_snr_db,
                               noise, fade);
    rec.b_to_a = rec.a_to_b;
  } else {
    RngStream noise_ab(cfg.eval_seed, "epoch-eval/noise/A->B", idx), noise_ba(cfg.eval_seed, "epoch-eval/noise/B->A", idx);
    RngStream fade_ab(cfg.eval_seed, "epoch-eval/fading", idx), fade_ba = fade_ab;
    rec.a_to_b = evaluate_link(run.node_a, run.node_b, d.test, count, cfg.batch_size, cfg.channel_kind, cfg.epoch_eval_snr_db,
                               noise_ab, fade_ab);
    rec.b_to_a = evaluate_link(run.node_b, run.node_a, d.test, count, cfg.batch_size, cfg.channel_kind, cfg.epoch_eval_snr_db,
                               noise_ba, fade_ba);
  }
  rec.average = {0.5 * (rec.a_to_b.psnr_db + rec.b_to_a.psnr_db), 0.5 * (rec.a_to_b.ssim + rec.b_to_a.ssim),
                 rec.a_to_b.n_images, rec.a_to_b.exact_count};
  return rec;
}

template <class T>
struct TrainHooks {
  std::function<void(const LogRow&)> on_row;
  std::function<void(TrainRun<T>&, const EpochRecord&)> on_epoch;
};

struct TrainOptions {
  std::int64_t max_steps = -1;       // stop after this many batches (-1: full schedule)
  bool evaluate_epochs = true;
  bool perturb_node_b_order = false;  // negative control: node B shuffles with another seed
  int divergence_patience = 50;
  double divergence_factor = 10.0;
};

namespace detail {

/// Consecutive-bad-step counter for the divergence policy.
class DivergenceGuard {
 public:
  DivergenceGuard(int patience, double factor) : patience_(patience), factor_(factor) {}

  void observe(double loss, std::int64_t step) {
    const bool bad = !std::isfinite(loss) || (best_ < std::numeric_limits<double>::infinity() && loss > factor_ * best_);
    if (std::isfinite(loss)) best_ = std::min(best_, loss);
    bad_ = bad ? bad_ + 1 : 0;
    if (bad_ >= patience_)
      throw DivergenceError("training diverged: " + std::to_string(bad_) + " consecutive bad steps ending at step " +
                            std::to_string(step));
  }

 private:
  int patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

}  // namespace detail

/// Runs the configured system over the dataset. twsc/gansc: per batch one stage-1 step and
/// one stage-2 step per node. jscc: end-to-end steps on node A.
template <class T>
void train_system(TrainRun<T>& run, const Dataset& d, const TrainHooks<T>& hooks = {}, const TrainOptions& opt = {}) {
  const auto& cfg = run.config;
  if (cfg.batch_size > training_pool_size(d, cfg)) throw ContractError("batch size exceeds the training pool");
  detail::DivergenceGuard guard(opt.divergence_patience, opt.divergence_factor);
  auto emit = [&](LogRow r) {
    if (hooks.on_row) hooks.on_row(r);
  };
  ExperimentConfig cfg_b = cfg;
  if (opt.perturb_node_b_order) cfg_b.seed = cfg.seed ^ 0x9e3779b97f4a7c15ULL;

  for (int e = 1; e <= cfg.epochs; ++e) {
    const auto sched_a = batch_stream(d, cfg, e - 1);
    const auto sched_b = opt.perturb_node_b_order ? batch_stream(d, cfg_b, e - 1) : sched_a;
    double loss_sum = 0.0;
    int loss_n = 0;
    for (int i = 0; i < sched_a.batch_count(); ++i) {
      if (opt.max_steps >= 0 && run.step >= opt.max_steps) break;
      const double snr_db = run.snr.uniform(cfg.train_snr_low_db, cfg.train_snr_high_db);
      const double lr = lr_at(cfg, run.step);
      auto row = [&](const char* mode, const std::string& dir, double loss) {
        LogRow r;
        r.epoch = e;
        r.step = run.step;
        r.mode = mode;
        r.direction = dir;
        r.loss = loss;
        r.snr_db = snr_db;
        r.lr = lr;
        r.forward_payload_count = run.forward_payloads();
        return r;
      };
      double step_loss = std::numeric_limits<double>::quiet_NaN();
      try {
        if (cfg.system_kind == SystemKind::jscc) {
          step_loss = jscc_step(run, materialize<T>(d, sched_a, i), snr_db);
          emit(row("jscc", "A->B", step_loss));
        } else {
          const auto m_a = materialize<T>(d, sched_a, i);
          const auto m_b = opt.perturb_node_b_order ? materialize<T>(d, sched_b, i) : m_a;
          const auto s1 = stage1_step(run, m_a, m_b, snr_db);
          for (NodeId me : {NodeId::B, NodeId::A}) {
            const auto& l = me == NodeId::B ? s1.at_b : s1.at_a;
            emit(row("gan_g", direction_into(me), l.generator));
            emit(row("gan_d", direction_into(me), l.discriminator));
            emit(row("rx", direction_into(me), l.receiver));
          }
          const double tx_a = stage2_step(run, m_a, NodeId::A, snr_db);
          const double tx_b = stage2_step(run, m_b, NodeId::B, snr_db);
          emit(row("tx", "A->B", tx_a));
          emit(row("tx", "B->A", tx_b));
          step_loss = s1.objective;
        }
      } catch (const TrainingFault&) {
      } catch (const NumericFault&) {
      }
      if (std::isfinite(step_loss)) {
        loss_sum += step_loss;
        ++loss_n;
      }
      ++run.step;
      guard.observe(step_loss, run.step - 1);
    }

    EpochRecord rec;
    if (opt.evaluate_epochs) rec = evaluate_epoch(run, d, e);
    rec.epoch = e;
    rec.step = run.step;
    rec.train_loss = loss_n ? loss_sum / loss_n : std::numeric_limits<double>::quiet_NaN();
    run.metric_log.push_back(rec);
    if (opt.evaluate_epochs) {
      auto eval_row = [&](const std::string& dir, const LinkQuality& q) {
        LogRow r;
        r.epoch = e;
        r.step = run.step;
        r.mode = "eval";
        r.direction = dir;
        r.loss = rec.train_loss;
        r.psnr = q.psnr_db;
        r.ssim = q.ssim;
        r.snr_db = cfg.epoch_eval_snr_db;
        r.lr = lr_at(cfg, run.step);
        r.forward_payload_count = run.forward_payloads();
        emit(r);
      };
      eval_row("A->B", rec.a_to_b);
      if (cfg.system_kind != SystemKind::jscc) eval_row("B->A", rec.b_to_a);
      eval_row("avg", rec.average);
    }
    if (hooks.on_epoch) hooks.on_epoch(run, rec);
    if (opt.max_steps >= 0 && run.step >= opt.max_steps) break;
  }
}

}  // namespace twsc
