#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "twsc/nn/layers.hpp"

namespace twsc::nn {

/// Ordered chain of layers with a numeric-fault check after every stage.
template <class T>
class Sequential {
 public:
  explicit Sequential(std::string label = "net") : label_(std::move(label)) {}
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <class L, class... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i]->forward(h);
      if (!h.all_finite()) throw NumericFault(where(i));
    }
    return h;
  }

  /// Backpropagates through the cached forward pass. Parameter gradients accumulate.
  Tensor<T> backward(const Tensor<T>& grad_out, BackwardMode mode = {}) {
    Tensor<T> g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const bool first = i == 0;
      g = layers_[i]->backward(g, BackwardMode{mode.params, first ? mode.input : true});
      if (!first && !g.all_finite()) throw NumericFault(where(i) + " (backward)");
    }
    return g;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_)
      for (auto* p : l->parameters()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  Shape output_shape(Shape in) const {
    for (const auto& l : layers_) in = l->output_shape(in);
    return in;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
  const std::string& label() const { return label_; }

 private:
  std::string where(std::size_t i) const {
    return label_ + " layer " + std::to_string(i) + " (" + layers_[i]->name() + ")";
  }

  std::string label_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Flattened copy of every parameter value, in declaration order.
template <class T>
std::vector<T> flatten_values(Sequential<T>& net) {
  std::vector<T> out;
  for (auto* p : net.parameters()) out.insert(out.end(), p->value.begin(), p->value.end());
  return out;
}

}  // namespace twsc::nn
