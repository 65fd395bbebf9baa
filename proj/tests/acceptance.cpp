// Acceptance checks. `acceptance <n>` runs one criterion and prints one line; `acceptance all`
// runs every criterion. Exit status: 0 pass, 1 fail, 77 skipped (missing full-scale artifacts).

#include <cstdlib>
#include <iostream>
#include <string>

#include "twsc/acceptance.hpp"
#include "twsc/reproduce.hpp"

#ifndef TWSC_SOURCE_DIR
#define TWSC_SOURCE_DIR "."
#endif

namespace {

using namespace twsc;
using namespace twsc::acceptance;

constexpr int kSkipExit = 77;

/// Directory of a full-scale `reproduce --scale full` output; overridable for other locations.
fs::path full_scale_dir() {
  if (const char* env = std::getenv("TWSC_FULL_RESULTS"); env && *env) return env;
  return fs::path(TWSC_SOURCE_DIR) / "runs" / "reproduce-full";
}

bool is_full_scale(const fs::path& run_dir) {
  if (!fs::exists(run_dir / "run.json") || !fs::exists(run_dir / "config.json")) return false;
  const auto cfg = config_from_json(read_json(run_dir / "config.json"));
  const auto rec = read_json(run_dir / "run.json");
  return rec.at("status") == "completed" && cfg.epochs >= 100 && cfg.train_limit == 0 && cfg.test_limit == 0;
}

CriterionResult skipped(int id, const std::string& name, const std::string& why) {
  auto r = acceptance::detail::make(id, name);
  r.verdict = Verdict::skipped;
  r.detail = why;
  return r;
}

/// Criterion 1 on a completed smoke-scale twsc run when one exists, otherwise on a fresh run at
/// the single-core acceptance budget.
CriterionResult criterion_1() {
  const char* env = std::getenv("TWSC_SMOKE_RESULTS");
  const fs::path smoke = env && *env ? fs::path(env) : fs::path(TWSC_SOURCE_DIR) / "runs" / "reproduce-smoke";
  ReproduceRequest smoke_req;
  const fs::path smoke_run = smoke / "runs" / "twsc-awgn";
  if (fs::exists(smoke_run / "run.json") &&
      config_from_json(read_json(smoke_run / "config.json")) == reproduce_config(smoke_req, SystemKind::twsc, ChannelKind::awgn))
    return check_no_feedback(smoke_run);

  const fs::path root = fs::temp_directory_path() / "twsc_acceptance_c1";
  fs::remove_all(root);
  ReproduceRequest scale;
  scale.scale = "ci";
  TrainRequest t;
  t.config = reproduce_config(scale, SystemKind::twsc, ChannelKind::awgn);
  t.runs_root = root;
  t.run_id = "twsc-awgn";
  t.log = &std::cerr;
  const auto res = train_command(t);
  auto r = check_no_feedback(res.run_dir);
  r.detail += " (ci-scale run; no smoke-scale run under " + smoke.string() + ")";
  return r;
}

CriterionResult criterion_3() {
  const fs::path dir = full_scale_dir() / "runs" / "twsc-awgn";
  if (!is_full_scale(dir)) return skipped(3, "convergence-20-epochs", "no completed full-scale twsc-awgn run under " + dir.string());
  return check_convergence(dir);
}

/// Latest evaluation CSV of one channel in a run directory.
std::optional<fs::path> latest_eval(const fs::path& run_dir, const std::string& channel) {
  std::optional<fs::path> best;
  if (!fs::exists(run_dir / "eval")) return best;
  for (const auto& e : fs::directory_iterator(run_dir / "eval")) {
    const auto name = e.path().filename().string();
    if (e.path().extension() != ".csv" || name.find("_" + channel) == std::string::npos) continue;
    if (!best || name > best->filename().string()) best = e.path();
  }
  return best;
}

CriterionResult criterion_4() {
  std::vector<MetricRow> rows;
  for (const std::string sys : {"twsc", "jscc", "gansc"})
    for (const std::string ch : {"awgn", "rayleigh"}) {
      const fs::path dir = full_scale_dir() / "runs" / (sys + "-" + ch);
      if (!is_full_scale(dir)) return skipped(4, "baseline-ordering", "no completed full-scale run " + dir.string());
      const auto csv = latest_eval(dir, ch);
      if (!csv) return skipped(4, "baseline-ordering", "no " + ch + " evaluation in " + dir.string());
      const auto t = read_csv(*csv);
      for (const auto& row : t.rows) {
        MetricRow m;
        m.system_kind = row[t.column("system_kind")];
        m.train_channel = row[t.column("train_channel")];
        m.eval_channel = row[t.column("eval_channel")];
        m.snr_db = parse_cell(row[t.column("snr_db")]);
        m.direction = row[t.column("direction")];
        m.psnr_db = parse_cell(row[t.column("psnr_db")]);
        m.ssim = parse_cell(row[t.column("ssim")]);
        rows.push_back(m);
      }
    }
  return check_ordering(rows);
}

CriterionResult run(int id) {
  switch (id) {
    case 1: return criterion_1();
    case 2: return check_reciprocity(load_dataset(default_data_dir()));
    case 3: return criterion_3();
    case 4: return criterion_4();
    case 5: return check_channel_calibration();
    case 6: return check_surrogate_fidelity();
    case 7: return check_metric_oracles();
    case 8: return check_numerics(load_dataset(default_data_dir()));
    default: throw UsageError("criterion must be 1..8");
  }
}

int exit_for(Verdict v) { return v == Verdict::pass ? 0 : v == Verdict::skipped ? kSkipExit : 1; }

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: acceptance <1-8|all>" << std::endl;
    return 2;
  }
  const std::string which = argv[1];
  try {
    if (which == "all") {
      int status = 0;
      for (int id = 1; id <= 8; ++id) {
        const auto r = run(id);
        std::cout << r.line() << std::endl;
        if (r.verdict == Verdict::fail) status = 1;
      }
      return status;
    }
    const int id = std::stoi(which);
    const auto r = run(id);
    std::cout << r.line() << std::endl;
    return exit_for(r.verdict);
  } catch (const std::exception& e) {
    std::cout << "criterion " << which << ": FAIL - " << e.what() << std::endl;
    return 1;
  }
}
