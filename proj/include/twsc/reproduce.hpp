#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "twsc/acceptance.hpp"
#include "twsc/harness.hpp"
#include "twsc/plot.hpp"

namespace twsc {

/// Training and evaluation budget of a reproduce scale.
struct ScalePreset {
  std::string name;
  int epochs = 100;
  int test_limit = 0;
  int train_limit = 0;
  int batch_size = 128;
  std::vector<double> eval_snr_db{0, 5, 10, 15, 20};
};

/// smoke: 5 epochs, 2000 test images, SNR {0,10,20}. full: the complete protocol.
/// ci: smoke with a 256-image training pool and batch 32, for single-core machines.
inline ScalePreset scale_preset(const std::string& name) {
  if (name == "full") return {"full", 100, 0, 0, 128, {0, 5, 10, 15, 20}};
  if (name == "smoke") return {"smoke", 5, 2000, 0, 128, {0, 10, 20}};
  if (name == "ci") return {"ci", 5, 2000, 256, 32, {0, 10, 20}};
  throw UsageError("--scale must be smoke, full or ci");
}

struct ReproduceRequest {
  std::string scale = "smoke";
  fs::path out;  // empty: runs/reproduce-<scale>
  fs::path data_dir = default_data_dir();
  std::uint64_t seed = 1;
  std::optional<int> epochs, train_limit, test_limit, batch_size;
  int control_steps = 20;  // length of the reciprocity twin/control runs
  std::vector<std::string> command;
  std::ostream* log = &std::cout;
};

struct ReproduceResult {
  int exit_code = kExitOk;
  fs::path out;
  std::vector<acceptance::CriterionResult> criteria;
};

inline ExperimentConfig reproduce_config(const ReproduceRequest& req, SystemKind sys, ChannelKind ch) {
  const auto p = scale_preset(req.scale);
  ExperimentConfig c;
  c.system_kind = sys;
  c.channel_kind = ch;
  c.seed = req.seed;
  c.epochs = req.epochs.value_or(p.epochs);
  c.test_limit = req.test_limit.value_or(p.test_limit);
  c.train_limit = req.train_limit.value_or(p.train_limit);
  c.batch_size = req.batch_size.value_or(p.batch_size);
  c.eval_snr_list_db = p.eval_snr_db;
  validate(c);
  return c;
}

namespace detail {

/// Trains into runs/<id> unless a completed run with the same config already lives there.
inline fs::path ensure_trained(const ReproduceRequest& req, const fs::path& runs, const std::string& id,
                               const ExperimentConfig& cfg) {
  const fs::path dir = runs / id;
  if (fs::exists(dir / "run.json")) {
    const auto rec = read_json(dir / "run.json");
    const auto have = config_from_json(read_json(dir / "config.json"));
    if (rec.at("status") == "completed" && have == cfg) {
      *req.log << id << ": reusing completed run" << std::endl;
      return dir;
    }
    throw UsageError(dir.string() + " holds an unfinished or different run; remove it or pick another --out");
  }
  TrainRequest t;
  t.config = cfg;
  t.runs_root = runs;
  t.run_id = id;
  t.data_dir = req.data_dir;
  t.command = req.command;
  t.log = req.log;
  const auto res = train_command(t);
  if (res.exit_code != kExitOk) throw std::runtime_error(id + " did not complete: " + res.record.value("error", std::string("?")));
  return dir;
}

/// Combines one criterion judged on several runs; details are prefixed with the run labels.
inline acceptance::CriterionResult merge(std::vector<acceptance::CriterionResult> parts, const std::vector<std::string>& labels) {
  auto out = parts.front();
  out.detail.clear();
  out.measured = nlohmann::json::object();
  bool any_fail = false, all_skip = true;
  for (const auto& p : parts) {
    any_fail |= p.verdict == acceptance::Verdict::fail;
    all_skip &= p.verdict == acceptance::Verdict::skipped;
  }
  for (std::size_t i = 0; i < parts.size(); ++i)
    out.detail += (i ? "; " : "") + labels[i] + ": " + parts[i].detail;
  out.verdict = any_fail ? acceptance::Verdict::fail : all_skip ? acceptance::Verdict::skipped : acceptance::Verdict::pass;
  for (std::size_t i = 0; i < parts.size(); ++i) out.measured[labels[i]] = parts[i].measured;
  return out;
}

/// Surrogate fidelity of a trained two-stage run: residual at 10 dB on pilots produced by its
/// own transmitter from test images.
inline acceptance::CriterionResult trained_fidelity(const fs::path& twsc_awgn, const fs::path& gansc_awgn, const Dataset& data) {
  auto r = acceptance::detail::make(6, "surrogate-fidelity");
  r.verdict = acceptance::Verdict::pass;
  auto run = load_trained_run(twsc_awgn);
  std::vector<int> idx(64);
  for (int i = 0; i < 64; ++i) idx[static_cast<std::size_t>(i)] = i;
  const auto pilot = transmit(run.node_a, gather_images<float>(data.test, idx)).x;
  const auto st = acceptance::residual_stats(run.surrogate(NodeId::A), pilot, 10.0);
  acceptance::judge_residual(r, st, 10.0);

  auto g1 = load_trained_run(gansc_awgn);
  auto g2 = load_trained_run(gansc_awgn);
  const bool independent = acceptance::ablation_ignores_pilot(g1.surrogate(NodeId::A), g2.surrogate(NodeId::A), pilot, 10.0);
  if (!independent) acceptance::detail::fail(r, "GAN-SC output depends on the pilot");
  r.measured = {{"residual_mean_magnitude", st.mean_magnitude}, {"residual_variance", st.variance},
                {"target_variance", noise_variance(10.0)}, {"gansc_pilot_independent", independent}};
  if (r.verdict == acceptance::Verdict::pass)
    r.detail = "|mean| " + acceptance::detail::fmt(st.mean_magnitude) + ", variance " + acceptance::detail::fmt(st.variance) +
               "; GAN-SC bit-identical under pilot perturbation";
  return r;
}

}  // namespace detail

/// Trains the system x channel grid, evaluates every run on both channels, writes the five
/// figures and a summary with one verdict per acceptance criterion.
inline ReproduceResult reproduce_command(const ReproduceRequest& req) {
  ReproduceResult res;
  res.out = req.out.empty() ? fs::path("runs") / ("reproduce-" + req.scale) : req.out;
  const fs::path runs = res.out / "runs";
  std::ostream& log = *req.log;
  const Dataset data = load_dataset(req.data_dir);

  std::map<std::string, fs::path> dirs;
  std::map<std::string, std::map<std::string, fs::path>> evals;  // id -> eval channel -> csv
  std::vector<MetricRow> rows;
  for (SystemKind sys : {SystemKind::twsc, SystemKind::jscc, SystemKind::gansc})
    for (ChannelKind ch : {ChannelKind::awgn, ChannelKind::rayleigh}) {
      const std::string id = to_string(sys) + "-" + to_string(ch);
      const auto cfg = reproduce_config(req, sys, ch);
      dirs[id] = detail::ensure_trained(req, runs, id, cfg);
      for (ChannelKind ev : {ChannelKind::awgn, ChannelKind::rayleigh}) {
        EvalRequest e;
        e.run = dirs[id].string();
        e.eval_channel = ev;
        e.data_dir = req.data_dir;
        const auto out = eval_command(e);
        evals[id][to_string(ev)] = out.csv;
        rows.insert(rows.end(), out.table.rows.begin(), out.table.rows.end());
        log << id << ": evaluated on " << to_string(ev) << " -> " << out.csv.string() << std::endl;
      }
    }

  const fs::path figs = res.out / "figures";
  for (const std::string metric : {"psnr", "ssim"})
    for (const std::string ch : {"awgn", "rayleigh"}) {
      PlotRequest p;
      p.metric = parse_plot_metric(metric);
      p.x = PlotAxis::snr;
      p.eval_channel = ch;
      for (const auto& [id, by_channel] : evals) p.inputs.push_back(by_channel.at(ch));
      p.out = figs / (metric + "_snr_" + ch + ".svg");
      p.title = (metric == "psnr" ? std::string("PSNR") : std::string("SSIM")) + " vs SNR, evaluated on " + ch;
      plot_command(p);
    }
  {
    PlotRequest p;
    p.metric = PlotMetric::ssim;
    p.x = PlotAxis::epoch;
    p.directions = {"A->B", "B->A"};
    p.inputs = {dirs.at("twsc-awgn") / "metrics.csv", dirs.at("twsc-rayleigh") / "metrics.csv"};
    p.out = figs / "ssim_epoch.svg";
    p.title = "SSIM vs epoch, both link directions";
    plot_command(p);
  }

  using namespace acceptance;
  auto& c = res.criteria;
  c.push_back(twsc::detail::merge({check_no_feedback(dirs.at("twsc-awgn")), check_no_feedback(dirs.at("twsc-rayleigh"))},
                                  {"twsc-awgn", "twsc-rayleigh"}));
  {
    ReciprocityOptions o;
    o.steps = req.control_steps;
    o.seed = req.seed;
    auto twin = check_reciprocity(data, o);
    for (const std::string id : {"twsc-awgn", "twsc-rayleigh", "gansc-awgn", "gansc-rayleigh"}) {
      const double d = read_json(dirs.at(id) / "run.json").at("weight_discrepancy").get<double>();
      twin.measured[id] = d;
      if (d != 0.0) acceptance::detail::fail(twin, id + " ended with |wA - wB| = " + acceptance::detail::fmt(d));
    }
    if (twin.verdict == Verdict::pass) twin.detail += "; all two-node grid runs end with identical node weights";
    c.push_back(twin);
  }
  c.push_back(check_convergence(dirs.at("twsc-awgn")));
  c.push_back(check_ordering(rows, req.scale != "full"));
  c.push_back(check_channel_calibration(req.seed));
  c.push_back(twsc::detail::trained_fidelity(dirs.at("twsc-awgn"), dirs.at("gansc-awgn"), data));
  c.push_back(check_metric_oracles(req.seed));
  c.push_back(check_numerics(data, req.seed));

  nlohmann::json summary = {{"scale", req.scale},
                            {"code_version", code_version()},
                            {"dataset_checksum", data.checksum},
                            {"command", req.command},
                            {"runs", nlohmann::json::object()},
                            {"criteria", nlohmann::json::array()}};
  for (const auto& [id, dir] : dirs) summary["runs"][id] = fs::relative(dir, res.out).string();
  std::string md = "# Reproduction summary (" + req.scale + " scale)\n\n| criterion | verdict | detail |\n|---|---|---|\n";
  std::vector<std::string> failed;
  for (const auto& r : c) {
    summary["criteria"].push_back(to_json(r));
    std::string cell;
    for (char ch : r.detail) cell += ch == '|' ? std::string("\\|") : std::string(1, ch);
    md += "| " + std::to_string(r.id) + " " + r.name + " | " + acceptance::to_string(r.verdict) + " | " + cell + " |\n";
    log << r.line() << std::endl;
    if (r.verdict == Verdict::fail) failed.push_back(std::to_string(r.id) + " " + r.name);
  }
  md += "\nFigures: `figures/` (SVG plus sidecar CSV with the plotted values).\n";
  write_json(res.out / "summary.json", summary);
  write_text(res.out / "summary.md", md);
  if (!failed.empty()) {
    res.exit_code = kExitCriterionFailed;
    std::string names;
    for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
    log << "failed criteria: " << names << std::endl;
  }
  return res;
}

}  // namespace twsc
