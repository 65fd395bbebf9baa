#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "twsc/checkpoint.hpp"
#include "twsc/config.hpp"
#include "twsc/evaluate.hpp"
#include "twsc/mnist.hpp"
#include "twsc/training.hpp"

#ifndef TWSC_CODE_VERSION
#define TWSC_CODE_VERSION "unknown"
#endif

namespace twsc {

namespace fs = std::filesystem;

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitMissingData = 3,
  kExitDiverged = 4,
  kExitCriterionFailed = 5,
};

/// Bad flags or inputs; reported with the usage hint.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetMissing : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string code_version() { return TWSC_CODE_VERSION; }

/// UTC wall-clock stamp, e.g. 20240131T120000Z.
inline std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << text;
  }
  fs::rename(tmp, p);
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw UsageError("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text(p)); }

inline void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

/// Loads MNIST or explains how to obtain it.
inline Dataset load_dataset(const fs::path& dir) {
  try {
    return ingest_mnist(dir);
  } catch (const IngestionError& e) {
    throw DatasetMissing(std::string("dataset unavailable at ") + dir.string() + ": " + e.what() +
                         "\n  run `twsc fetch-data --from <directory holding the four MNIST IDX files>`"
                         " or point TWSC_DATA_DIR at an existing copy");
  }
}

/// Copies the four IDX files from `from` into `to` and checks the result parses.
inline Dataset fetch_data(const fs::path& from, const fs::path& to) {
  fs::create_directories(to);
  for (const char* name : {kTrainImages, kTrainLabels, kTestImages, kTestLabels}) {
    const fs::path src = from / name;
    if (!fs::exists(src)) throw UsageError("missing " + src.string());
    fs::copy_file(src, to / name, fs::copy_options::overwrite_existing);
  }
  return ingest_mnist(to);
}

// ---- metrics.csv ----

inline constexpr const char* kMetricsCsvHeader = "epoch,step,mode,direction,loss,psnr,ssim,snr_db,lr,forward_payload_count";

/// Shortest round-trip formatting so reruns compare byte for byte.
inline std::string metrics_csv_line(const LogRow& r) {
  using detail::format_double;
  std::string s;
  s += std::to_string(r.epoch) + ',' + std::to_string(r.step) + ',' + r.mode + ',' + r.direction + ',';
  s += format_double(r.loss) + ',' + format_double(r.psnr) + ',' + format_double(r.ssim) + ',';
  s += format_double(r.snr_db) + ',' + format_double(r.lr) + ',' + std::to_string(r.forward_payload_count);
  return s;
}

/// Header plus string cells; values are kept verbatim.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw UsageError("CSV has no column '" + name + "'");
  }
  bool has_column(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const fs::path& p) {
  std::istringstream in(read_text(p));
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw UsageError(p.string() + " is empty");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size())
      throw UsageError(p.string() + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline double parse_cell(const std::string& s) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  return detail::parse_double(s);
}

// ---- run directories ----

inline std::string default_run_id(const ExperimentConfig& c) {
  return to_string(c.system_kind) + "-" + to_string(c.channel_kind) + "-s" + std::to_string(c.seed);
}

/// First of base, base-2, base-3, ... that does not exist under root.
inline std::string fresh_run_id(const fs::path& root, const std::string& base) {
  if (!fs::exists(root / base)) return base;
  for (int k = 2;; ++k) {
    const std::string id = base + "-" + std::to_string(k);
    if (!fs::exists(root / id)) return id;
  }
}

inline fs::path checkpoint_path(const fs::path& run_dir, NodeId node, int epoch) {
  return run_dir / to_string(node) / (std::to_string(epoch) + ".ckpt");
}

/// Nodes whose weights a run stores. The one-way baseline only uses node A.
inline std::vector<NodeId> stored_nodes(SystemKind k) {
  if (k == SystemKind::jscc) return {NodeId::A};
  return {NodeId::A, NodeId::B};
}

inline nlohmann::json quality_json(const LinkQuality& q) {
  return {{"psnr_db", q.psnr_db}, {"ssim", q.ssim}, {"n_images", q.n_images}, {"exact_count", q.exact_count}};
}

struct TrainRequest {
  ExperimentConfig config;
  fs::path runs_root = "runs";
  std::string run_id;  // empty: derived from the config
  fs::path data_dir = default_data_dir();
  std::vector<std::string> command;
  TrainOptions options;
  std::ostream* log = &std::cout;
};

struct TrainResult {
  int exit_code = kExitOk;
  std::string run_id;
  fs::path run_dir;
  nlohmann::json record;
};

/// Trains one system and writes runs/<id>/{config.json, run.json, metrics.csv, <node>/<epoch>.ckpt}.
inline TrainResult train_command(const TrainRequest& req) {
  const ExperimentConfig& cfg = req.config;
  validate(cfg);
  std::ostream& log = *req.log;
  const Dataset data = load_dataset(req.data_dir);

  TrainResult res;
  fs::create_directories(req.runs_root);
  if (!req.run_id.empty()) {
    if (fs::exists(req.runs_root / req.run_id))
      throw UsageError("run directory " + (req.runs_root / req.run_id).string() + " already exists; runs are never overwritten");
    res.run_id = req.run_id;
  } else {
    res.run_id = fresh_run_id(req.runs_root, default_run_id(cfg));
  }
  res.run_dir = req.runs_root / res.run_id;
  fs::create_directories(res.run_dir);
  write_json(res.run_dir / "config.json", to_json(cfg));

  const auto started = std::chrono::steady_clock::now();
  auto since_start = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(); };
  nlohmann::json& rec = res.record;
  rec = {{"run_id", res.run_id},
         {"status", "running"},
         {"config", to_json(cfg)},
         {"dataset", {{"dir", req.data_dir.string()}, {"checksum", data.checksum}, {"train_images", data.train.count},
                      {"test_images", data.test.count}}},
         {"code_version", code_version()},
         {"command", req.command},
         {"started_utc", utc_stamp()},
         {"epochs", nlohmann::json::array()},
         {"checkpoints", nlohmann::json::array()}};
  write_json(res.run_dir / "run.json", rec);

  std::ofstream csv(res.run_dir / "metrics.csv", std::ios::binary);
  csv << kMetricsCsvHeader << '\n';

  auto run = TrainRun<float>::standard(cfg);
  const std::uint64_t hash = config_hash(cfg);
  double epoch_started = 0.0;
  TrainHooks<float> hooks;
  hooks.on_row = [&](const LogRow& r) { csv << metrics_csv_line(r) << '\n'; };
  hooks.on_epoch = [&](TrainRun<float>& r, const EpochRecord& e) {
    csv.flush();
    const bool stopping = req.options.max_steps >= 0 && r.step >= req.options.max_steps;
    if (e.epoch % cfg.checkpoint_every == 0 || e.epoch == cfg.epochs || stopping) {
      for (NodeId id : stored_nodes(cfg.system_kind)) {
        auto* sur = id == NodeId::A ? (r.surrogate_a ? &*r.surrogate_a : nullptr) : (r.surrogate_b ? &*r.surrogate_b : nullptr);
        const auto path = checkpoint_path(res.run_dir, id, e.epoch);
        write_checkpoint(path, snapshot(r.node(id), sur, hash, e.epoch, r.step));
        rec["checkpoints"].push_back(fs::relative(path, res.run_dir).string());
      }
      rec["final_epoch"] = e.epoch;
    }
    const double now = since_start();
    rec["epochs"].push_back({{"epoch", e.epoch},
                             {"step", e.step},
                             {"train_loss", e.train_loss},
                             {"A->B", quality_json(e.a_to_b)},
                             {"B->A", quality_json(e.b_to_a)},
                             {"avg", quality_json(e.average)},
                             {"seconds", now - epoch_started}});
    epoch_started = now;
    write_json(res.run_dir / "run.json", rec);
    log << res.run_id << " epoch " << e.epoch << "/" << cfg.epochs << " step " << e.step << " loss " << e.train_loss
        << " psnr " << e.average.psnr_db << " ssim " << e.average.ssim << " (" << now << " s)" << std::endl;
  };

  try {
    train_system(run, data, hooks, req.options);
    rec["status"] = "completed";
  } catch (const DivergenceError& e) {
    rec["status"] = "diverged";
    rec["error"] = e.what();
    res.exit_code = kExitDiverged;
    log << res.run_id << ": " << e.what() << std::endl;
  } catch (const std::exception& e) {
    rec["status"] = "failed";
    rec["error"] = e.what();
    res.exit_code = kExitFailure;
    log << res.run_id << ": " << e.what() << std::endl;
  }
  csv.flush();
  rec["steps"] = run.step;
  rec["audits"] = {{"A->B", to_json(run.link_ab.audit())}, {"B->A", to_json(run.link_ba.audit())}};
  if (cfg.system_kind == SystemKind::jscc) rec["weight_discrepancy"] = nullptr;
  else rec["weight_discrepancy"] = weight_reciprocity_check(run);
  rec["finished_utc"] = utc_stamp();
  rec["total_seconds"] = since_start();
  write_json(res.run_dir / "run.json", rec);
  return res;
}

/// Resolves `--run` given as a path or as an id under runs_root.
inline fs::path resolve_run_dir(const std::string& run, const fs::path& runs_root) {
  if (fs::exists(fs::path(run) / "run.json")) return run;
  if (fs::exists(runs_root / run / "run.json")) return runs_root / run;
  throw UsageError("no run '" + run + "' (looked for " + (fs::path(run) / "run.json").string() + " and " +
                   (runs_root / run / "run.json").string() + ")");
}

/// Rebuilds a run from its config and the checkpoints of one epoch (default: the last one).
inline TrainRun<float> load_trained_run(const fs::path& run_dir, std::optional<int> epoch = std::nullopt) {
  const auto cfg = config_from_json(read_json(run_dir / "config.json"));
  const auto rec = read_json(run_dir / "run.json");
  int e = 0;
  if (epoch) e = *epoch;
  else if (rec.contains("final_epoch")) e = rec.at("final_epoch").get<int>();
  else throw CheckpointError("run " + run_dir.string() + " has no completed checkpoint; expected " +
                             checkpoint_path(run_dir, NodeId::A, 1).string());
  auto run = TrainRun<float>::standard(cfg);
  for (NodeId id : stored_nodes(cfg.system_kind)) {
    const auto data = read_checkpoint(checkpoint_path(run_dir, id, e));
    if (data.config_hash != config_hash(cfg))
      throw CheckpointError(checkpoint_path(run_dir, id, e).string() + " belongs to a different config");
    auto* sur = id == NodeId::A ? (run.surrogate_a ? &*run.surrogate_a : nullptr) : (run.surrogate_b ? &*run.surrogate_b : nullptr);
    apply(data, run.node(id), sur);
    run.step = data.step;
  }
  return run;
}

struct EvalRequest {
  std::string run;
  fs::path runs_root = "runs";
  ChannelKind eval_channel = ChannelKind::awgn;
  std::vector<double> snr_db;  // empty: the run's eval_snr_list_db
  int n_images = -1;           // -1: the run's test_limit; 0: the whole test set
  std::optional<int> epoch;
  fs::path data_dir = default_data_dir();
};

struct EvalResult {
  MetricTable table;
  fs::path csv;
  fs::path json;
};

/// Writes <run>/eval/<stamp>_<channel>.{csv,json}; never touches existing files.
inline EvalResult eval_command(const EvalRequest& req) {
  const fs::path dir = resolve_run_dir(req.run, req.runs_root);
  auto run = load_trained_run(dir, req.epoch);
  const auto& cfg = run.config;
  const Dataset data = load_dataset(req.data_dir);
  const auto snrs = req.snr_db.empty() ? cfg.eval_snr_list_db : req.snr_db;
  const int n = req.n_images < 0 ? cfg.test_limit : req.n_images;

  EvalResult res;
  res.table = evaluate_sweep(run, req.eval_channel, snrs, data.test, n);
  const auto rec = read_json(dir / "run.json");
  const std::string base = utc_stamp() + "_" + to_string(req.eval_channel);
  std::string name = base;
  for (int k = 2; fs::exists(dir / "eval" / (name + ".csv")); ++k) name = base + "-" + std::to_string(k);
  res.csv = dir / "eval" / (name + ".csv");
  res.json = dir / "eval" / (name + ".json");
  write_text(res.csv, to_csv(res.table));
  write_json(res.json, {{"run_id", rec.at("run_id")},
                        {"config_hash", hex64(config_hash(cfg))},
                        {"dataset_checksum", data.checksum},
                        {"training_dataset_checksum", rec.at("dataset").at("checksum")},
                        {"code_version", code_version()},
                        {"checkpoint_step", run.step},
                        {"eval_channel", to_string(req.eval_channel)},
                        {"snr_db", snrs},
                        {"eval_seed", cfg.eval_seed},
                        {"audits", rec.value("audits", nlohmann::json())},
                        {"rows", to_json(res.table)}});
  return res;
}

}  // namespace twsc
