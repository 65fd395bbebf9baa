// twsc: train, evaluate, plot and reproduce two-way semantic communication experiments.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "twsc/harness.hpp"
#include "twsc/plot.hpp"
#include "twsc/reproduce.hpp"

namespace {

using namespace twsc;

std::vector<double> parse_snr_list(const std::string& s) {
  try {
    return detail::parse_list(s);
  } catch (const std::exception& e) {
    throw UsageError("--snr: " + std::string(e.what()));
  }
}

struct TrainFlags {
  std::string system, channel, config, run_id, runs = "runs", data;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch, train_limit, test_limit;
  std::int64_t max_steps = -1;
};

int run_train(const TrainFlags& f, const std::vector<std::string>& argv) {
  if (f.config.empty() && (f.system.empty() || f.channel.empty()))
    throw UsageError("train needs --system and --channel unless --config names a config file");
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (!f.system.empty()) cfg.system_kind = parse_system_kind(f.system);
  if (!f.channel.empty()) cfg.channel_kind = parse_channel_kind(f.channel);
  if (f.seed) cfg.seed = *f.seed;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.batch) cfg.batch_size = *f.batch;
  if (f.train_limit) cfg.train_limit = *f.train_limit;
  if (f.test_limit) cfg.test_limit = *f.test_limit;
  validate(cfg);
  TrainRequest req;
  req.config = cfg;
  req.runs_root = f.runs;
  req.run_id = f.run_id;
  req.data_dir = f.data.empty() ? default_data_dir() : fs::path(f.data);
  req.command = argv;
  req.options.max_steps = f.max_steps;
  const auto res = train_command(req);
  std::cout << "run " << res.run_id << " (" << res.record.at("status").get<std::string>() << ") in " << res.run_dir.string()
            << std::endl;
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-way semantic communication without feedback: training and evaluation harness"};
  app.require_subcommand(1);
  const std::vector<std::string> command(argv, argv + argc);

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train one system; writes runs/<id>/");
  train->add_option("--system", tf.system, "twsc | jscc | gansc")->check(CLI::IsMember({"twsc", "jscc", "gansc"}));
  train->add_option("--channel", tf.channel, "awgn | rayleigh")->check(CLI::IsMember({"awgn", "rayleigh"}));
  train->add_option("--seed", tf.seed, "Master seed");
  train->add_option("--config", tf.config, "key=value config file")->check(CLI::ExistingFile);
  train->add_option("--epochs", tf.epochs, "Override the epoch count")->check(CLI::PositiveNumber);
  train->add_option("--batch-size", tf.batch, "Override the batch size")->check(CLI::PositiveNumber);
  train->add_option("--train-limit", tf.train_limit, "Use only the first N training images (0: all)")->check(CLI::NonNegativeNumber);
  train->add_option("--test-limit", tf.test_limit, "Evaluate per epoch on the first N test images (0: all)")->check(CLI::NonNegativeNumber);
  train->add_option("--max-steps", tf.max_steps, "Stop after this many batches");
  train->add_option("--run-id", tf.run_id, "Run directory name (default <system>-<channel>-s<seed>)");
  train->add_option("--runs-dir", tf.runs, "Parent of run directories")->capture_default_str();
  train->add_option("--data-dir", tf.data, "MNIST directory (default $TWSC_DATA_DIR or data/mnist)");

  EvalRequest er;
  std::string eval_channel = "awgn", eval_snr, eval_data;
  std::optional<int> eval_epoch;
  auto* eval = app.add_subcommand("eval", "Evaluate a trained run over the physical channel");
  eval->add_option("--run", er.run, "Run id or directory")->required();
  eval->add_option("--eval-channel", eval_channel, "awgn | rayleigh")->check(CLI::IsMember({"awgn", "rayleigh"}))->capture_default_str();
  eval->add_option("--snr", eval_snr, "Comma-separated SNR list in dB (default: the run's list)");
  eval->add_option("--n-images", er.n_images, "Test images to use (default: the run's test_limit; 0: all)");
  eval->add_option("--epoch", eval_epoch, "Checkpoint epoch (default: last)");
  eval->add_option("--runs-dir", er.runs_root, "Parent of run directories")->capture_default_str();
  eval->add_option("--data-dir", eval_data, "MNIST directory");

  PlotRequest pr;
  std::string metric = "psnr", x_axis = "snr", direction = "avg", plot_channel;
  std::vector<std::string> plot_inputs;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Plot metrics.csv or eval CSVs to SVG plus a sidecar CSV");
  plot->add_option("--metric", metric, "psnr | ssim")->check(CLI::IsMember({"psnr", "ssim"}))->capture_default_str();
  plot->add_option("--x", x_axis, "snr | epoch")->check(CLI::IsMember({"snr", "epoch"}))->capture_default_str();
  plot->add_option("--direction", direction, "avg | A->B | B->A | both")->check(CLI::IsMember({"avg", "A->B", "B->A", "both"}))->capture_default_str();
  plot->add_option("--eval-channel", plot_channel, "Keep rows evaluated on this channel");
  plot->add_option("--out", plot_out, "Output SVG path")->required();
  plot->add_option("--title", pr.title, "Figure title");
  plot->add_option("inputs", plot_inputs, "Input CSV files")->required()->check(CLI::ExistingFile);

  ReproduceRequest rr;
  std::string rr_out, rr_data;
  auto* reproduce = app.add_subcommand("reproduce", "Train the system x channel grid, evaluate, plot and check criteria");
  reproduce->add_option("--scale", rr.scale, "smoke | full | ci")->check(CLI::IsMember({"smoke", "full", "ci"}))->capture_default_str();
  reproduce->add_option("--out", rr_out, "Output directory (default runs/reproduce-<scale>)");
  reproduce->add_option("--seed", rr.seed, "Master seed")->capture_default_str();
  reproduce->add_option("--epochs", rr.epochs, "Override the scale's epoch count")->check(CLI::PositiveNumber);
  reproduce->add_option("--train-limit", rr.train_limit, "Override the training pool size")->check(CLI::NonNegativeNumber);
  reproduce->add_option("--test-limit", rr.test_limit, "Override the test image count")->check(CLI::NonNegativeNumber);
  reproduce->add_option("--batch-size", rr.batch_size, "Override the batch size")->check(CLI::PositiveNumber);
  reproduce->add_option("--control-steps", rr.control_steps, "Steps of the reciprocity twin/control runs")->capture_default_str();
  reproduce->add_option("--data-dir", rr_data, "MNIST directory");

  std::string fetch_from, fetch_to;
  auto* fetch = app.add_subcommand("fetch-data", "Copy and verify the four MNIST IDX files");
  fetch->add_option("--from", fetch_from, "Directory holding the IDX files")->required()->check(CLI::ExistingDirectory);
  fetch->add_option("--to", fetch_to, "Destination (default $TWSC_DATA_DIR or data/mnist)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(tf, command);
    if (*eval) {
      er.eval_channel = parse_channel_kind(eval_channel);
      if (!eval_snr.empty()) er.snr_db = parse_snr_list(eval_snr);
      er.epoch = eval_epoch;
      if (!eval_data.empty()) er.data_dir = eval_data;
      const auto res = eval_command(er);
      std::cout << to_csv(res.table) << "wrote " << res.csv.string() << " and " << res.json.string() << std::endl;
      return kExitOk;
    }
    if (*plot) {
      pr.metric = parse_plot_metric(metric);
      pr.x = parse_plot_axis(x_axis);
      pr.directions = direction == "both" ? std::vector<std::string>{"A->B", "B->A"} : std::vector<std::string>{direction};
      if (!plot_channel.empty()) pr.eval_channel = plot_channel;
      pr.inputs.assign(plot_inputs.begin(), plot_inputs.end());
      pr.out = plot_out;
      const auto res = plot_command(pr);
      std::cout << "wrote " << res.svg.string() << " and " << res.sidecar.string() << std::endl;
      return kExitOk;
    }
    if (*reproduce) {
      if (!rr_out.empty()) rr.out = rr_out;
      if (!rr_data.empty()) rr.data_dir = rr_data;
      rr.command = command;
      const auto res = reproduce_command(rr);
      std::cout << "summary: " << (res.out / "summary.md").string() << std::endl;
      return res.exit_code;
    }
    if (*fetch) {
      const fs::path to = fetch_to.empty() ? default_data_dir() : fs::path(fetch_to);
      const auto d = fetch_data(fetch_from, to);
      std::cout << "MNIST ready in " << to.string() << " (" << d.train.count << " train, " << d.test.count
                << " test, checksum " << d.checksum << ")" << std::endl;
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help() << std::flush;
    return kExitUsage;
  } catch (const DatasetMissing& e) {
    std::cerr << e.what() << std::endl;
    return kExitMissingData;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "invalid configuration: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitFailure;
  }
  return kExitOk;
}
