#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "twsc/errors.hpp"
#include "twsc/sp_cgan.hpp"
#include "twsc/transceiver.hpp"

namespace twsc {

inline constexpr char kCheckpointMagic[8] = {'T', 'W', 'S', 'C', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat named-tensor image of one node (transceiver, optimizer state, surrogate if any).
struct CheckpointData {
  std::uint64_t config_hash = 0;
  std::int32_t epoch = 0;
  std::int64_t step = 0;
  std::map<std::string, std::vector<double>> tensors;
  std::map<std::string, std::int64_t> counters;
};

namespace detail {

template <class T>
void collect(CheckpointData& c, const std::string& prefix, nn::Sequential<T>& net, nn::Adam<T>& opt) {
  for (auto* p : net.parameters()) c.tensors[prefix + "/" + p->name] = {p->value.begin(), p->value.end()};
  c.counters[prefix + "/adam_steps"] = opt.steps();
  for (std::size_t k = 0; k < opt.first_moments().size(); ++k) {
    const auto& m = opt.first_moments()[k];
    const auto& v = opt.second_moments()[k];
    c.tensors[prefix + "/adam_m/" + std::to_string(k)] = {m.begin(), m.end()};
    c.tensors[prefix + "/adam_v/" + std::to_string(k)] = {v.begin(), v.end()};
  }
}

template <class T>
void restore(const CheckpointData& c, const std::string& prefix, nn::Sequential<T>& net, nn::Adam<T>& opt) {
  for (auto* p : net.parameters()) {
    const auto it = c.tensors.find(prefix + "/" + p->name);
    if (it == c.tensors.end()) throw CheckpointError("checkpoint lacks " + prefix + "/" + p->name);
    if (it->second.size() != p->value.size()) throw CheckpointError("checkpoint tensor " + it->first + " has the wrong size");
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(it->second[i]);
  }
  const auto steps = c.counters.find(prefix + "/adam_steps");
  opt.set_steps(steps == c.counters.end() ? 0 : steps->second);
  opt.first_moments().clear();
  opt.second_moments().clear();
  for (std::size_t k = 0;; ++k) {
    const auto m = c.tensors.find(prefix + "/adam_m/" + std::to_string(k));
    const auto v = c.tensors.find(prefix + "/adam_v/" + std::to_string(k));
    if (m == c.tensors.end() || v == c.tensors.end()) break;
    opt.first_moments().emplace_back(m->second.begin(), m->second.end());
    opt.second_moments().emplace_back(v->second.begin(), v->second.end());
  }
}

template <class V>
void put(std::ostream& o, V v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class V>
V get(std::istream& in) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("checkpoint truncated");
  return v;
}

inline void put_string(std::ostream& o, const std::string& s) {
  put<std::uint32_t>(o, static_cast<std::uint32_t>(s.size()));
  o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw CheckpointError("checkpoint truncated");
  return s;
}

}  // namespace detail

template <class T>
CheckpointData snapshot(NodeState<T>& node, ChannelSurrogate<T>* surrogate, std::uint64_t config_hash, int epoch,
                        std::int64_t step) {
  CheckpointData c;
  c.config_hash = config_hash;
  c.epoch = epoch;
  c.step = step;
  auto nets = node.networks();
  auto opts = node.optimizers();
  for (std::size_t i = 0; i < nets.size(); ++i) detail::collect(c, nets[i]->label(), *nets[i], *opts[i]);
  if (surrogate) {
    detail::collect(c, "generator", surrogate->generator, surrogate->generator_opt);
    detail::collect(c, "discriminator", surrogate->discriminator, surrogate->discriminator_opt);
    c.counters["surrogate/updates"] = surrogate->updates;
  }
  return c;
}

template <class T>
void apply(const CheckpointData& c, NodeState<T>& node, ChannelSurrogate<T>* surrogate) {
  auto nets = node.networks();
  auto opts = node.optimizers();
  for (std::size_t i = 0; i < nets.size(); ++i) detail::restore(c, nets[i]->label(), *nets[i], *opts[i]);
  if (surrogate) {
    detail::restore(c, "generator", surrogate->generator, surrogate->generator_opt);
    detail::restore(c, "discriminator", surrogate->discriminator, surrogate->discriminator_opt);
    const auto u = c.counters.find("surrogate/updates");
    surrogate->updates = u == c.counters.end() ? 0 : u->second;
  }
}

/// Writes atomically (temp file + rename). Values are stored as little-endian doubles in name
/// order, so equal states give equal bytes.
inline void write_checkpoint(const std::filesystem::path& path, const CheckpointData& c) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw CheckpointError("cannot write " + tmp);
    o.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put(o, kCheckpointVersion);
    detail::put(o, c.config_hash);
    detail::put(o, c.epoch);
    detail::put(o, c.step);
    detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(c.counters.size()));
    for (const auto& [k, v] : c.counters) {
      detail::put_string(o, k);
      detail::put(o, v);
    }
    detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [k, v] : c.tensors) {
      detail::put_string(o, k);
      detail::put<std::uint64_t>(o, v.size());
      o.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!o) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("missing checkpoint: expected " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint");
  const auto version = detail::get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  CheckpointData c;
  c.config_hash = detail::get<std::uint64_t>(in);
  c.epoch = detail::get<std::int32_t>(in);
  c.step = detail::get<std::int64_t>(in);
  const auto nc = detail::get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < nc; ++i) {
    auto k = detail::get_string(in);
    c.counters[k] = detail::get<std::int64_t>(in);
  }
  const auto nt = detail::get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < nt; ++i) {
    auto k = detail::get_string(in);
    const auto n = detail::get<std::uint64_t>(in);
    std::vector<double> v(n);
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
      throw CheckpointError("checkpoint truncated in " + k);
    c.tensors[k] = std::move(v);
  }
  return c;
}

}  // namespace twsc
