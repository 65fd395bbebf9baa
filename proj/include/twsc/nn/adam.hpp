#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "twsc/nn/layers.hpp"

namespace twsc::nn {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// Adam with bias correction. Moments are indexed by parameter position, so an optimizer
/// must always be stepped with the same parameter list.
template <class T>
class Adam {
 public:
  explicit Adam(AdamHyper h = {}) : h_(h) {}

  void step(const std::vector<Parameter<T>*>& params, double lr) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->value.size(), T{});
        v_.emplace_back(p->value.size(), T{});
      }
    }
    if (m_.size() != params.size()) throw ContractError("optimizer stepped with a different parameter list");
    ++t_;
    const double c1 = 1.0 - std::pow(h_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(h_.beta2, static_cast<double>(t_));
    const T step = static_cast<T>(lr * std::sqrt(c2) / c1);
    const T b1 = static_cast<T>(h_.beta1), b2 = static_cast<T>(h_.beta2);
    const T eps = static_cast<T>(h_.epsilon * std::sqrt(c2));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      auto& m = m_[k];
      auto& v = v_[k];
      if (m.size() != p.value.size()) throw ContractError("optimizer state does not match " + p.name);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T g = p.grad[i];
        m[i] = b1 * m[i] + (T{1} - b1) * g;
        v[i] = b2 * v[i] + (T{1} - b2) * g * g;
        p.value[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
      }
    }
  }

  std::int64_t steps() const { return t_; }
  const AdamHyper& hyper() const { return h_; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamHyper h_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace twsc::nn
