#pragma once

#include <numeric>
#include <vector>

#include "twsc/config.hpp"
#include "twsc/mnist.hpp"
#include "twsc/rng.hpp"

namespace twsc {

/// One epoch's ordered list of training batches, as image indices. Pure function of
/// (dataset, seed, epoch); both nodes receive equal schedules.
struct BatchSchedule {
  int batch_size = 0;
  std::vector<int> order;  // permuted training indices, truncated to whole batches

  int batch_count() const { return batch_size > 0 ? static_cast<int>(order.size()) / batch_size : 0; }
  std::vector<int> batch_indices(int i) const {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(i) * batch_size;
    return {first, first + batch_size};
  }
  bool operator==(const BatchSchedule&) const = default;
};

inline int training_pool_size(const Dataset& d, const ExperimentConfig& cfg) {
  return cfg.train_limit > 0 ? std::min(cfg.train_limit, d.train.count) : d.train.count;
}

/// Deterministic shuffle of the training pool for (cfg.seed, epoch); the partial tail batch
/// is dropped.
inline BatchSchedule batch_stream(const Dataset& d, const ExperimentConfig& cfg, int epoch) {
  if (epoch < 0) throw ContractError("epoch must be >= 0");
  const int n = training_pool_size(d, cfg);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  RngStream rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
  for (int i = n - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  BatchSchedule s;
  s.batch_size = cfg.batch_size;
  perm.resize(static_cast<std::size_t>(n / cfg.batch_size) * cfg.batch_size);
  s.order = std::move(perm);
  return s;
}

template <class T>
Tensor<T> materialize(const Dataset& d, const BatchSchedule& s, int i) {
  return gather_images<T>(d.train, s.batch_indices(i));
}

}  // namespace twsc
