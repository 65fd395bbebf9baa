#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "twsc/harness.hpp"
#include "twsc/plot.hpp"
#include "twsc/reproduce.hpp"

using namespace twsc;

#ifndef TWSC_CLI_PATH
#define TWSC_CLI_PATH "twsc"
#endif

namespace {

bool have_mnist() { return fs::exists(default_data_dir() / kTrainImages); }

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("twsc_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig quick(SystemKind sys, ChannelKind ch, int epochs) {
  ExperimentConfig c;
  c.system_kind = sys;
  c.channel_kind = ch;
  c.epochs = epochs;
  c.batch_size = 4;
  c.train_limit = 8;
  c.test_limit = 8;
  c.eval_snr_list_db = {0, 10, 20};
  return c;
}

TrainResult quick_train(const fs::path& root, const ExperimentConfig& cfg, const std::string& id = "") {
  TrainRequest t;
  t.config = cfg;
  t.runs_root = root;
  t.run_id = id;
  std::ostringstream sink;
  t.log = &sink;
  return train_command(t);
}

int shell(const std::string& args, std::string* output = nullptr) {
  const auto log = fs::temp_directory_path() / "twsc_cli_shell.txt";
  const int rc = std::system((std::string(TWSC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1").c_str());
  if (output) *output = read_text(log);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(MetricsCsv, LineFormatIsRoundTripExact) {
  LogRow r;
  r.epoch = 2;
  r.step = 17;
  r.mode = "tx";
  r.direction = "A->B";
  r.loss = 0.1;
  r.snr_db = 7.25;
  r.lr = 1e-3 / 3.0;
  r.forward_payload_count = 34;
  const auto line = metrics_csv_line(r);
  EXPECT_EQ(line, "2,17,tx,A->B,0.1,nan,nan,7.25,0.0003333333333333333,34");
  const auto cells = split_csv_line(line);
  EXPECT_EQ(parse_cell(cells[8]), r.lr);
  EXPECT_TRUE(std::isnan(parse_cell(cells[5])));
  const std::string header = kMetricsCsvHeader;
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 9);
}

TEST(Configs, SampleFilesParse) {
  const fs::path dir = fs::path(TWSC_SOURCE_DIR) / "configs";
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".cfg") continue;
    EXPECT_NO_THROW(load_config(e.path())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 3);
  const auto c = load_config(dir / "twsc_awgn.cfg");
  EXPECT_EQ(c, ExperimentConfig{});
}

TEST(Train, WritesRunDirectoryWithOneRecordPerEpoch) {
  if (!have_mnist()) GTEST_SKIP() << "MNIST not available";
  const auto root = scratch("train");
  const auto res = quick_train(root, quick(SystemKind::twsc, ChannelKind::awgn, 3));
  ASSERT_EQ(res.exit_code, kExitOk);
  EXPECT_EQ(res.run_id, "twsc-awgn-s1");
  for (const char* f : {"config.json", "run.json", "metrics.csv"}) EXPECT_TRUE(fs::exists(res.run_dir / f)) << f;
  for (int e = 1; e <= 3; ++e)
    for (NodeId n : {NodeId::A, NodeId::B}) EXPECT_TRUE(fs::exists(checkpoint_path(res.run_dir, n, e)));
  const auto rec = read_json(res.run_dir / "run.json");
  EXPECT_EQ(rec.at("status"), "completed");
  EXPECT_EQ(rec.at("epochs").size(), 3u);
  EXPECT_EQ(rec.at("weight_discrepancy").get<double>(), 0.0);
  EXPECT_EQ(rec.at("audits").at("A->B").at("backward_gradient_count"), 0);
  const auto t = read_csv(res.run_dir / "metrics.csv");
  EXPECT_EQ(t.header, split_csv_line(kMetricsCsvHeader));
  std::set<std::string> eval_epochs;
  for (const auto& row : t.rows)
    if (row[t.column("mode")] == "eval") eval_epochs.insert(row[t.column("epoch")]);
  EXPECT_EQ(eval_epochs, (std::set<std::string>{"1", "2", "3"}));
  EXPECT_EQ(config_from_json(read_json(res.run_dir / "config.json")), quick(SystemKind::twsc, ChannelKind::awgn, 3));
}

TEST(Train, IdenticalRerunGivesBitIdenticalMetrics) {
  if (!have_mnist()) GTEST_SKIP() << "MNIST not available";
  const auto root = scratch("rerun");
  const auto a = quick_train(root, quick(SystemKind::gansc, ChannelKind::rayleigh, 2));
  const auto b = quick_train(root, quick(SystemKind::gansc, ChannelKind::rayleigh, 2));
  EXPECT_NE(a.run_id, b.run_id);
  EXPECT_EQ(read_text(a.run_dir / "metrics.csv"), read_text(b.run_dir / "metrics.csv"));
  EXPECT_THROW(quick_train(root, quick(SystemKind::gansc, ChannelKind::rayleigh, 2), a.run_id), UsageError);
}

TEST(Train, DefaultsAreRecordedInConfigJson) {
  if (!have_mnist()) GTEST_SKIP() << "MNIST not available";
  const auto root = scratch("defaults");
  std::string out;
  const int rc = shell("train --system jscc --channel rayleigh --max-steps 1 --test-limit 4 --runs-dir " + root.string(), &out);
  ASSERT_EQ(rc, 0) << out;
  const auto cfg = read_json(root / "jscc-rayleigh-s1" / "config.json");
  EXPECT_EQ(cfg.at("epochs"), 100);
  EXPECT_EQ(cfg.at("batch_size"), 128);
  EXPECT_TRUE(fs::exists(root / "jscc-rayleigh-s1" / "A" / "1.ckpt"));
  EXPECT_FALSE(fs::exists(root / "jscc-rayleigh-s1" / "B"));
}

TEST(Cli, UsageAndMissingDataErrors) {
  std::string out;
  EXPECT_EQ(shell("train --epochs 3", &out), kExitUsage) << out;
  EXPECT_NE(out.find("--system"), std::string::npos);
  const auto root = scratch("nodata");
  EXPECT_EQ(shell("train --system twsc --channel awgn --data-dir " + (root / "absent").string() + " --runs-dir " + root.string(), &out),
            kExitMissingData);
  EXPECT_NE(out.find("fetch-data"), std::string::npos) << out;
  EXPECT_NE(shell("train --system nope --channel awgn", &out), 0);
}

TEST(Eval, RowAccountingDeterminismAndMissingCheckpoint) {
  if (!have_mnist()) GTEST_SKIP() << "MNIST not available";
  const auto root = scratch("eval");
  const auto res = quick_train(root, quick(SystemKind::twsc, ChannelKind::awgn, 1));
  EvalRequest e;
  e.run = res.run_id;
  e.runs_root = root;
  e.snr_db = {0, 5, 10, 15, 20};
  const auto first = eval_command(e);
  EXPECT_EQ(first.table.averaged().size(), 5u);
  EXPECT_EQ(first.table.rows.size(), 15u);
  for (const auto& r : first.table.rows) EXPECT_TRUE(std::isfinite(r.psnr_db));
  const auto second = eval_command(e);
  EXPECT_NE(first.csv, second.csv);
  EXPECT_EQ(read_text(first.csv), read_text(second.csv));
  EXPECT_EQ(read_json(first.json).at("rows"), read_json(second.json).at("rows"));

  fs::remove(checkpoint_path(res.run_dir, NodeId::B, 1));
  try {
    eval_command(e);
    FAIL() << "expected a checkpoint error";
  } catch (const CheckpointError& err) {
    EXPECT_NE(std::string(err.what()).find(checkpoint_path(res.run_dir, NodeId::B, 1).string()), std::string::npos) << err.what();
  }
}

TEST(Plot, SidecarMatchesInputsAndLegendUsesRunIds) {
  if (!have_mnist()) GTEST_SKIP() << "MNIST not available";
  const auto root = scratch("plot");
  const auto a = quick_train(root, quick(SystemKind::twsc, ChannelKind::awgn, 3), "run-one");
  const auto b = quick_train(root, quick(SystemKind::jscc, ChannelKind::awgn, 3), "run-two");
  PlotRequest p;
  p.metric = PlotMetric::ssim;
  p.x = PlotAxis::epoch;
  p.inputs = {a.run_dir / "metrics.csv", b.run_dir / "metrics.csv"};
  p.out = root / "fig" / "ssim_epoch.svg";
  const auto res = plot_command(p);
  ASSERT_EQ(res.series.size(), 2u);
  EXPECT_EQ(res.series[0].label, "run-one");
  EXPECT_EQ(res.series[1].label, "run-two");
  EXPECT_EQ(res.series[0].x, (std::vector<std::string>{"1", "2", "3"}));

  const auto svg = read_text(res.svg);
  EXPECT_NE(svg.find(">run-one</text>"), std::string::npos);
  EXPECT_NE(svg.find(">run-two</text>"), std::string::npos);

  const auto metrics = read_csv(a.run_dir / "metrics.csv");
  std::vector<std::string> want;
  for (const auto& row : metrics.rows)
    if (row[metrics.column("mode")] == "eval" && row[metrics.column("direction")] == "avg")
      want.push_back(row[metrics.column("ssim")]);
  const auto side = read_csv(res.sidecar);
  std::vector<std::string> got;
  for (const auto& row : side.rows)
    if (row[0] == "run-one") got.push_back(row[2]);
  EXPECT_EQ(got, want);

  const auto empty = root / "empty.csv";
  write_text(empty, std::string(kMetricsCsvHeader) + "\n");
  p.inputs = {empty};
  EXPECT_THROW(plot_command(p), UsageError);
}

TEST(Reproduce, TinyGridWritesFiguresAndSummary) {
  if (!have_mnist()) GTEST_SKIP() << "MNIST not available";
  const auto root = scratch("reproduce");
  std::string out;
  const int rc = shell("reproduce --scale ci --epochs 1 --train-limit 64 --test-limit 32 --control-steps 2 --out " + root.string(), &out);
  EXPECT_TRUE(rc == kExitOk || rc == kExitCriterionFailed) << out;
  for (const char* f : {"psnr_snr_awgn", "psnr_snr_rayleigh", "ssim_snr_awgn", "ssim_snr_rayleigh", "ssim_epoch"}) {
    EXPECT_TRUE(fs::exists(root / "figures" / (std::string(f) + ".svg"))) << f;
    EXPECT_TRUE(fs::exists(root / "figures" / (std::string(f) + ".csv"))) << f;
  }
  const auto summary = read_json(root / "summary.json");
  ASSERT_EQ(summary.at("criteria").size(), 8u);
  bool any_fail = false;
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(summary.at("criteria")[static_cast<std::size_t>(i)].at("id"), i + 1);
    any_fail |= summary.at("criteria")[static_cast<std::size_t>(i)].at("verdict") == "FAIL";
  }
  EXPECT_EQ(rc, any_fail ? kExitCriterionFailed : kExitOk);
  EXPECT_EQ(summary.at("runs").size(), 6u);
  const auto side = read_csv(root / "figures" / "psnr_snr_awgn.csv");
  std::set<std::string> labels;
  for (const auto& row : side.rows) labels.insert(row[0]);
  EXPECT_EQ(labels.size(), 6u);

  // A second invocation reuses the completed runs instead of retraining or overwriting them.
  const auto before = read_text(root / "runs" / "twsc-awgn" / "metrics.csv");
  shell("reproduce --scale ci --epochs 1 --train-limit 64 --test-limit 32 --control-steps 2 --out " + root.string(), &out);
  EXPECT_NE(out.find("reusing completed run"), std::string::npos);
  EXPECT_EQ(read_text(root / "runs" / "twsc-awgn" / "metrics.csv"), before);
}
