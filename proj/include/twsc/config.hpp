#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "twsc/errors.hpp"
#include "twsc/rng.hpp"

namespace twsc {

enum class ChannelKind { awgn, rayleigh };
enum class SystemKind { twsc, jscc, gansc };
enum class LossMode { paper_literal, standard_hinge };

inline std::string to_string(ChannelKind k) { return k == ChannelKind::awgn ? "awgn" : "rayleigh"; }
inline std::string to_string(SystemKind k) {
  switch (k) {
    case SystemKind::twsc: return "twsc";
    case SystemKind::jscc: return "jscc";
    case SystemKind::gansc: return "gansc";
  }
  return "?";
}
inline std::string to_string(LossMode m) { return m == LossMode::paper_literal ? "paper_literal" : "standard_hinge"; }

inline ChannelKind parse_channel_kind(std::string_view s) {
  if (s == "awgn") return ChannelKind::awgn;
  if (s == "rayleigh") return ChannelKind::rayleigh;
  throw std::invalid_argument("unknown channel kind '" + std::string(s) + "' (awgn|rayleigh)");
}
inline SystemKind parse_system_kind(std::string_view s) {
  if (s == "twsc") return SystemKind::twsc;
  if (s == "jscc") return SystemKind::jscc;
  if (s == "gansc") return SystemKind::gansc;
  throw std::invalid_argument("unknown system kind '" + std::string(s) + "' (twsc|jscc|gansc)");
}
inline LossMode parse_loss_mode(std::string_view s) {
  if (s == "paper_literal") return LossMode::paper_literal;
  if (s == "standard_hinge") return LossMode::standard_hinge;
  throw std::invalid_argument("unknown loss mode '" + std::string(s) + "' (paper_literal|standard_hinge)");
}

/// Everything that determines a run. Serialised as flat `key=value` lines; list values are
/// comma separated.
struct ExperimentConfig {
  ChannelKind channel_kind = ChannelKind::awgn;
  SystemKind system_kind = SystemKind::twsc;
  double train_snr_low_db = 0.0;
  double train_snr_high_db = 20.0;
  std::vector<double> eval_snr_list_db{0, 5, 10, 15, 20};
  double learning_rate = 1e-3;
  double lr_decay = 1e-4;
  int batch_size = 128;
  int epochs = 100;
  std::uint64_t seed = 1;
  int symbol_count = 256;
  LossMode loss_mode = LossMode::standard_hinge;
  int noise_dim = 2;

  // Run-size and bookkeeping knobs.
  int train_limit = 0;  // 0: all training images
  int test_limit = 0;   // 0: all test images
  double epoch_eval_snr_db = 10.0;
  std::uint64_t eval_seed = 2024;
  bool shared_noise = true;  // both link directions draw identical noise (twin-node determinism)
  int checkpoint_every = 1;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters in number '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("not a boolean: '" + s + "'");
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw std::invalid_argument("empty list element");
    out.push_back(parse_double(item));
  }
  return out;
}

/// Shortest text that round-trips the double exactly.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"channel_kind", [](auto& c, const auto& v) { c.channel_kind = parse_channel_kind(v); }},
      {"system_kind", [](auto& c, const auto& v) { c.system_kind = parse_system_kind(v); }},
      {"train_snr_range_db",
       [](auto& c, const auto& v) {
         auto l = parse_list(v);
         if (l.size() != 2) throw std::invalid_argument("expected 'low,high'");
         c.train_snr_low_db = l[0];
         c.train_snr_high_db = l[1];
       }},
      {"eval_snr_list_db", [](auto& c, const auto& v) { c.eval_snr_list_db = parse_list(v); }},
      {"learning_rate", [](auto& c, const auto& v) { c.learning_rate = parse_double(v); }},
      {"lr_decay", [](auto& c, const auto& v) { c.lr_decay = parse_double(v); }},
      {"batch_size", [](auto& c, const auto& v) { c.batch_size = static_cast<int>(parse_int(v)); }},
      {"epochs", [](auto& c, const auto& v) { c.epochs = static_cast<int>(parse_int(v)); }},
      {"seed", [](auto& c, const auto& v) { c.seed = static_cast<std::uint64_t>(parse_int(v)); }},
      {"symbol_count", [](auto& c, const auto& v) { c.symbol_count = static_cast<int>(parse_int(v)); }},
      {"loss_mode", [](auto& c, const auto& v) { c.loss_mode = parse_loss_mode(v); }},
      {"noise_dim", [](auto& c, const auto& v) { c.noise_dim = static_cast<int>(parse_int(v)); }},
      {"train_limit", [](auto& c, const auto& v) { c.train_limit = static_cast<int>(parse_int(v)); }},
      {"test_limit", [](auto& c, const auto& v) { c.test_limit = static_cast<int>(parse_int(v)); }},
      {"epoch_eval_snr_db", [](auto& c, const auto& v) { c.epoch_eval_snr_db = parse_double(v); }},
      {"eval_seed", [](auto& c, const auto& v) { c.eval_seed = static_cast<std::uint64_t>(parse_int(v)); }},
      {"shared_noise", [](auto& c, const auto& v) { c.shared_noise = parse_bool(v); }},
      {"checkpoint_every", [](auto& c, const auto& v) { c.checkpoint_every = static_cast<int>(parse_int(v)); }},
  };
  return table;
}

}  // namespace detail

/// Throws ValidationError naming the first field that breaks an invariant.
inline void validate(const ExperimentConfig& c) {
  if (c.batch_size < 1) throw ValidationError("batch_size", "must be >= 1");
  if (c.epochs < 1) throw ValidationError("epochs", "must be >= 1");
  if (c.train_snr_low_db > c.train_snr_high_db) throw ValidationError("train_snr_range_db", "low must not exceed high");
  if (!(c.learning_rate > 0)) throw ValidationError("learning_rate", "must be > 0");
  if (!(c.lr_decay >= 0)) throw ValidationError("lr_decay", "must be >= 0");
  if (c.symbol_count != 256) throw ValidationError("symbol_count", "the transceiver architecture emits 256 symbols per image");
  if (c.noise_dim < 1) throw ValidationError("noise_dim", "must be >= 1");
  if (c.eval_snr_list_db.empty()) throw ValidationError("eval_snr_list_db", "must not be empty");
  if (c.train_limit < 0) throw ValidationError("train_limit", "must be >= 0");
  if (c.test_limit < 0) throw ValidationError("test_limit", "must be >= 0");
  if (c.checkpoint_every < 1) throw ValidationError("checkpoint_every", "must be >= 1");
}

/// Parses `key=value` text; blank lines and `#` comments are ignored, absent keys keep
/// their defaults. Throws ConfigError (with line) or ValidationError (with field).
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "expected key=value");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    const auto& table = detail::setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(line_no, "unknown key '" + key + "'");
    if (seen.count(key)) throw ConfigError(line_no, "duplicate key '" + key + "' (first on line " + std::to_string(seen[key]) + ")");
    seen[key] = line_no;
    try {
      it->second(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError(line_no, key + ": " + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(0, "cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Canonical text form; parse_config(to_text(c)) == c.
inline std::string to_text(const ExperimentConfig& c) {
  using detail::format_double;
  std::ostringstream o;
  o << "channel_kind=" << to_string(c.channel_kind) << '\n'
    << "system_kind=" << to_string(c.system_kind) << '\n'
    << "train_snr_range_db=" << format_double(c.train_snr_low_db) << ',' << format_double(c.train_snr_high_db) << '\n'
    << "eval_snr_list_db=" << detail::format_list(c.eval_snr_list_db) << '\n'
    << "learning_rate=" << format_double(c.learning_rate) << '\n'
    << "lr_decay=" << format_double(c.lr_decay) << '\n'
    << "batch_size=" << c.batch_size << '\n'
    << "epochs=" << c.epochs << '\n'
    << "seed=" << c.seed << '\n'
    << "symbol_count=" << c.symbol_count << '\n'
    << "loss_mode=" << to_string(c.loss_mode) << '\n'
    << "noise_dim=" << c.noise_dim << '\n'
    << "train_limit=" << c.train_limit << '\n'
    << "test_limit=" << c.test_limit << '\n'
    << "epoch_eval_snr_db=" << format_double(c.epoch_eval_snr_db) << '\n'
    << "eval_seed=" << c.eval_seed << '\n'
    << "shared_noise=" << (c.shared_noise ? "true" : "false") << '\n'
    << "checkpoint_every=" << c.checkpoint_every << '\n';
  return o.str();
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return stream_tag(to_text(c)); }

inline std::string hex64(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << v;
  return o.str();
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {
      {"channel_kind", to_string(c.channel_kind)},
      {"system_kind", to_string(c.system_kind)},
      {"train_snr_range_db", {c.train_snr_low_db, c.train_snr_high_db}},
      {"eval_snr_list_db", c.eval_snr_list_db},
      {"learning_rate", c.learning_rate},
      {"lr_decay", c.lr_decay},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"symbol_count", c.symbol_count},
      {"loss_mode", to_string(c.loss_mode)},
      {"noise_dim", c.noise_dim},
      {"train_limit", c.train_limit},
      {"test_limit", c.test_limit},
      {"epoch_eval_snr_db", c.epoch_eval_snr_db},
      {"eval_seed", c.eval_seed},
      {"shared_noise", c.shared_noise},
      {"checkpoint_every", c.checkpoint_every},
      {"config_text", to_text(c)},
      {"config_hash", hex64(config_hash(c))},
  };
}

/// Restores a config from its JSON snapshot (via the embedded canonical text).
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  return parse_config(j.at("config_text").get<std::string>());
}

}  // namespace twsc
