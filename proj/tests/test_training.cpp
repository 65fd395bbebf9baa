#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "twsc/evaluate.hpp"
#include "twsc/training.hpp"

using namespace twsc;

namespace {

using TwinRun = TrainRun<double>;

TwinRun make_run(SystemKind kind, ChannelKind ch = ChannelKind::awgn) {
  return TwinRun(fixture::small_config(kind, ch), fixture::small_arch(), SurrogateArch::tiny());
}

template <class T>
std::vector<T> weights_of(std::initializer_list<nn::Sequential<T>*> nets) {
  std::vector<T> out;
  for (auto* n : nets) {
    auto v = nn::flatten_values(*n);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::vector<double> transmitter(NodeState<double>& n) { return weights_of({&n.semantic_encoder, &n.channel_encoder}); }
std::vector<double> receiver(NodeState<double>& n) { return weights_of({&n.channel_decoder, &n.semantic_decoder}); }

Tensor<double> batch_of(const Dataset& d, int first, int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = first + i;
  return gather_images<double>(d.train, idx);
}

}  // namespace

TEST(LearningRate, InverseTimeDecay) {
  ExperimentConfig c;
  EXPECT_DOUBLE_EQ(lr_at(c, 0), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(c, 10000), 5e-4);
  double prev = lr_at(c, 0);
  for (std::int64_t t : {1, 10, 1000, 100000, 10000000}) {
    EXPECT_LT(lr_at(c, t), prev);
    prev = lr_at(c, t);
  }
  EXPECT_LT(lr_at(c, 1'000'000'000'000), 1e-11);
  EXPECT_THROW(lr_at(c, -1), ContractError);
}

TEST(Objective, ReciprocalMseExamples) {
  Tensor<double> m(Shape{1, 2, 4, 4}, 0.3);
  EXPECT_EQ(reciprocal_mse_objective(m, m, m, m), 0.0);
  Tensor<double> off(Shape{1, 2, 4, 4}, 0.4);
  EXPECT_NEAR(reciprocal_mse_objective(off, m, off, m), 0.01, 1e-12);

  RngStream rng(1, "test");
  Tensor<double> a(Shape{1, 3, 5, 5}), b(a.shape()), c(a.shape()), d(a.shape());
  for (auto* t : {&a, &b, &c, &d})
    for (auto& v : t->storage()) v = rng.uniform();
  double s1 = 0, s2 = 0;
  for (int i = 0; i < 3; ++i) {
    s1 += oracle::mse(a.data() + a.index(0, i), b.data() + b.index(0, i), 5, 5);
    s2 += oracle::mse(c.data() + c.index(0, i), d.data() + d.index(0, i), 5, 5);
  }
  EXPECT_NEAR(reciprocal_mse_objective(a, b, c, d), 0.5 * (s1 / 3 + s2 / 3), 1e-7);
}

TEST(StageOne, TouchesOnlyReceiversAndSurrogates) {
  const auto d = fixture::blobs(16, 8, 12);
  auto run = make_run(SystemKind::twsc);
  const auto m = batch_of(d, 0, 4);
  const auto tx_a = transmitter(run.node_a), tx_b = transmitter(run.node_b);
  const auto rx_a = receiver(run.node_a);
  const auto g_a = run.surrogate_a->flat_weights();
  stage1_step(run, m, m, 10.0);
  EXPECT_EQ(transmitter(run.node_a), tx_a);
  EXPECT_EQ(transmitter(run.node_b), tx_b);
  EXPECT_NE(receiver(run.node_a), rx_a);
  EXPECT_NE(run.surrogate_a->flat_weights(), g_a);
  EXPECT_EQ(run.link_ab.audit().forward_payload_count, 1);
  EXPECT_EQ(run.link_ba.audit().forward_payload_count, 1);
  EXPECT_EQ(run.forward_payloads(), 2);
  EXPECT_EQ(run.backward_gradients(), 0);
}

TEST(StageOne, TwinExecutionsAreBitIdentical) {
  const auto d = fixture::blobs(16, 8, 12);
  auto r1 = make_run(SystemKind::twsc, ChannelKind::rayleigh);
  auto r2 = make_run(SystemKind::twsc, ChannelKind::rayleigh);
  for (int i = 0; i < 3; ++i) {
    const auto m = batch_of(d, 4 * i, 4);
    stage1_step(r1, m, m, 5.0);
    stage1_step(r2, m, m, 5.0);
  }
  EXPECT_EQ(receiver(r1.node_b), receiver(r2.node_b));
  EXPECT_EQ(r1.surrogate_b->flat_weights(), r2.surrogate_b->flat_weights());
}

TEST(StageOne, RejectsTheOneWayBaseline) {
  const auto d = fixture::blobs(8, 4, 12);
  auto run = make_run(SystemKind::jscc);
  const auto m = batch_of(d, 0, 4);
  EXPECT_THROW(stage1_step(run, m, m, 10.0), ContractError);
}

TEST(StageTwo, RequiresATrainedSurrogate) {
  const auto d = fixture::blobs(8, 4, 12);
  auto run = make_run(SystemKind::twsc);
  EXPECT_THROW(stage2_step(run, batch_of(d, 0, 4), NodeId::A, 10.0), ContractError);
}

TEST(StageTwo, IsLocalAndMovesOnlyTheTransmitter) {
  const auto d = fixture::blobs(16, 8, 12);
  auto run = make_run(SystemKind::twsc);
  const auto m = batch_of(d, 0, 4);
  stage1_step(run, m, m, 10.0);
  const auto payloads = run.forward_payloads();
  const auto rx = receiver(run.node_a), sur = run.surrogate_a->flat_weights(), tx = transmitter(run.node_a);
  const auto other = run.node_b.flat_weights();
  stage2_step(run, m, NodeId::A, 10.0);
  EXPECT_EQ(run.forward_payloads(), payloads);
  EXPECT_EQ(receiver(run.node_a), rx);
  EXPECT_EQ(run.surrogate_a->flat_weights(), sur);
  EXPECT_NE(transmitter(run.node_a), tx);
  EXPECT_EQ(run.node_b.flat_weights(), other);
}

TEST(StageTwo, LossIsTheLocalComposition) {
  const auto d = fixture::blobs(16, 8, 12);
  auto run = make_run(SystemKind::twsc);
  const auto m4 = batch_of(d, 0, 4);
  stage1_step(run, m4, m4, 10.0);
  const auto m = batch_of(d, 4, 2);
  const RngStream latent = run.surrogate_a->latent;
  const double got = stage2_step(run, m, NodeId::A, 7.0);

  auto twin = make_run(SystemKind::twsc);
  stage1_step(twin, m4, m4, 10.0);
  auto& node = twin.node_a;
  auto& sur = *twin.surrogate_a;
  sur.latent = latent;
  const auto x = transmit(node, m).x;
  const auto y_hat = generate(sur, make_condition(sur, x, 7.0));
  const auto out = semantic_decode(channel_decode(y_hat, node), node);
  double want = 0;
  for (int i = 0; i < 2; ++i) want += oracle::mse(out.data() + out.index(0, i), m.data() + m.index(0, i), 12, 12);
  EXPECT_NEAR(got, want / 2, 1e-12);
}

TEST(StageTwo, UnconditionedSurrogateGivesTheTransmitterNoGradient) {
  const auto d = fixture::blobs(16, 8, 12);
  auto run = make_run(SystemKind::gansc);
  const auto m = batch_of(d, 0, 4);
  stage1_step(run, m, m, 10.0);
  const auto tx = transmitter(run.node_a);
  stage2_step(run, m, NodeId::A, 10.0);
  EXPECT_EQ(transmitter(run.node_a), tx);
}

TEST(Reciprocity, HoldsBitwiseUnderSharedStreams) {
  const auto d = fixture::blobs(64, 8, 12);
  auto run = make_run(SystemKind::twsc, ChannelKind::rayleigh);
  EXPECT_EQ(weight_reciprocity_check(run), 0.0);
  TrainOptions opt;
  opt.max_steps = 20;
  opt.evaluate_epochs = false;
  run.config.epochs = 5;
  train_system(run, d, {}, opt);
  EXPECT_EQ(run.step, 20);
  EXPECT_EQ(weight_reciprocity_check(run), 0.0);
  EXPECT_NE(run.node_a.flat_weights(), NodeState<double>::create(NodeId::A, fixture::small_arch(), 1).flat_weights());
}

TEST(Reciprocity, BreaksWhenNodeBShufflesDifferently) {
  const auto d = fixture::blobs(64, 8, 12);
  auto run = make_run(SystemKind::twsc);
  TrainOptions opt;
  opt.max_steps = 5;
  opt.evaluate_epochs = false;
  opt.perturb_node_b_order = true;
  train_system(run, d, {}, opt);
  EXPECT_GT(weight_reciprocity_check(run), 0.0);
}

TEST(Reciprocity, BreaksWithIndependentLinkNoise) {
  const auto d = fixture::blobs(64, 8, 12);
  auto cfg = fixture::small_config(SystemKind::twsc);
  cfg.shared_noise = false;
  TrainRun<double> run(cfg, fixture::small_arch(), SurrogateArch::tiny());
  TrainOptions opt;
  opt.max_steps = 3;
  opt.evaluate_epochs = false;
  train_system(run, d, {}, opt);
  EXPECT_GT(weight_reciprocity_check(run), 0.0);
}

TEST(TrainSystem, EmitsRowsAndEpochRecords) {
  const auto d = fixture::blobs(32, 8, 12);
  auto run = make_run(SystemKind::twsc);
  std::vector<LogRow> rows;
  int epochs_seen = 0;
  TrainHooks<double> hooks{[&](const LogRow& r) { rows.push_back(r); },
                           [&](TrainRun<double>&, const EpochRecord&) { ++epochs_seen; }};
  train_system(run, d, hooks);
  EXPECT_EQ(epochs_seen, 2);
  ASSERT_EQ(run.metric_log.size(), 2u);
  EXPECT_EQ(run.step, 16);
  EXPECT_EQ(run.forward_payloads(), 32);
  EXPECT_EQ(run.backward_gradients(), 0);
  // 8 training rows per batch, 3 eval rows per epoch
  EXPECT_EQ(rows.size(), 16u * 8 + 2 * 3);
  const auto& last = run.metric_log.back();
  EXPECT_TRUE(std::isfinite(last.a_to_b.psnr_db));
  EXPECT_EQ(last.a_to_b.n_images, 8);
  EXPECT_NEAR(last.a_to_b.psnr_db, last.b_to_a.psnr_db, 0.1);
}

TEST(TrainSystem, OneWayBaselineTrainsEveryNetworkOfNodeA) {
  const auto d = fixture::blobs(32, 8, 12);
  auto run = make_run(SystemKind::jscc, ChannelKind::rayleigh);
  const auto before = run.node_a.flat_weights();
  const auto tx = transmitter(run.node_a), rx = receiver(run.node_a);
  TrainOptions opt;
  opt.max_steps = 2;
  opt.evaluate_epochs = false;
  train_system(run, d, {}, opt);
  EXPECT_NE(transmitter(run.node_a), tx);
  EXPECT_NE(receiver(run.node_a), rx);
  EXPECT_EQ(run.forward_payloads(), 0);
  EXPECT_FALSE(run.surrogate_a.has_value());
}

TEST(TrainSystem, ReconstructionLossFallsOnStructuredData) {
  const auto d = fixture::blobs(128, 8, 12);
  for (auto kind : {SystemKind::twsc, SystemKind::jscc}) {
    auto run = make_run(kind);
    run.config.epochs = 3;
    run.config.batch_size = 8;
    TrainOptions opt;
    opt.evaluate_epochs = false;
    train_system(run, d, {}, opt);
    EXPECT_LT(run.metric_log[2].train_loss, run.metric_log[0].train_loss) << to_string(kind);
  }
}

TEST(TrainSystem, DivergenceGuardAbortsAfterPatience) {
  detail::DivergenceGuard g(3, 10.0);
  g.observe(1.0, 0);
  g.observe(50.0, 1);
  g.observe(std::nan(""), 2);
  g.observe(0.5, 3);  // resets
  g.observe(20.0, 4);
  g.observe(20.0, 5);
  EXPECT_THROW(g.observe(20.0, 6), DivergenceError);
}

TEST(Evaluate, RowAccountingAndDeterminism) {
  const auto d = fixture::blobs(16, 10, 12);
  auto run = make_run(SystemKind::twsc);
  const std::vector<double> snrs{0, 5, 10, 15, 20};
  const auto t = evaluate_sweep(run, ChannelKind::awgn, snrs, d.test);
  EXPECT_EQ(t.rows.size(), 15u);
  EXPECT_EQ(t.averaged().size(), 5u);
  for (const auto& r : t.rows) {
    EXPECT_TRUE(std::isfinite(r.psnr_db));
    EXPECT_LE(r.ssim, 1.0);
  }
  EXPECT_EQ(to_csv(t), to_csv(evaluate_sweep(run, ChannelKind::awgn, snrs, d.test)));

  auto j = make_run(SystemKind::jscc);
  EXPECT_EQ(evaluate_sweep(j, ChannelKind::rayleigh, snrs, d.test, 4).rows.size(), 5u);
}

TEST(Evaluate, NeverCallsTheSurrogate) {
  const auto d = fixture::blobs(16, 10, 12);
  auto run = make_run(SystemKind::twsc);
  const auto m = batch_of(d, 0, 4);
  stage1_step(run, m, m, 10.0);
  const auto calls = run.surrogate_a->generate_calls + run.surrogate_b->generate_calls;
  evaluate_sweep(run, ChannelKind::rayleigh, {10.0}, d.test);
  EXPECT_EQ(run.surrogate_a->generate_calls + run.surrogate_b->generate_calls, calls);
}
