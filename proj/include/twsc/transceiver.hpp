#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "twsc/nn/adam.hpp"
#include "twsc/nn/sequential.hpp"
#include "twsc/symbols.hpp"

namespace twsc {

enum class NodeId { A, B };
inline std::string to_string(NodeId n) { return n == NodeId::A ? "A" : "B"; }
inline NodeId other(NodeId n) { return n == NodeId::A ? NodeId::B : NodeId::A; }

/// Layer plan of the four transceiver networks. All kernels are kernel x kernel with
/// padding 1; decoders mirror the encoder strides and hit the encoder's intermediate sizes.
struct TransceiverArch {
  int image_size = 28;
  int image_channels = 1;
  int kernel = 3;
  std::vector<int> semantic_filters{4, 8, 8, 16, 16};
  std::vector<int> semantic_strides{1, 2, 1, 2, 1};
  std::vector<int> channel_filters{16, 16, 32, 32};
  std::vector<int> channel_strides{1, 1, 2, 1};
  std::vector<int> channel_decoder_filters{32, 32, 16, 16};
  std::vector<int> semantic_decoder_filters{8, 8, 4, 4, 1};

  static TransceiverArch standard() { return {}; }

  /// Two filters per layer on 8x8 images; small enough for finite-difference checks.
  static TransceiverArch tiny() {
    TransceiverArch a;
    a.image_size = 8;
    a.semantic_filters = {2, 2, 2, 2, 2};
    a.channel_filters = {2, 2, 2, 2};
    a.channel_decoder_filters = {2, 2, 2, 2};
    a.semantic_decoder_filters = {2, 2, 2, 2, 1};
    return a;
  }

  nn::ConvGeometry geometry(int stride) const {
    const int pad = kernel / 2;
    return {kernel, kernel, stride, stride, pad, pad};
  }

  /// Spatial size after each semantic-encoder layer, starting with the image size.
  std::vector<int> semantic_sizes() const {
    std::vector<int> s{image_size};
    for (int st : semantic_strides) s.push_back(geometry(st).out_h(s.back()));
    return s;
  }
  std::vector<int> channel_sizes() const {
    std::vector<int> s{semantic_sizes().back()};
    for (int st : channel_strides) s.push_back(geometry(st).out_h(s.back()));
    return s;
  }

  int feature_channels() const { return semantic_filters.back(); }
  int feature_size() const { return semantic_sizes().back(); }
  int code_channels() const { return channel_filters.back(); }
  int code_size() const { return channel_sizes().back(); }
  int symbol_count() const { return code_channels() / 2 * code_size() * code_size(); }
};

namespace detail {

template <class T>
void add_conv_stack(nn::Sequential<T>& net, const TransceiverArch& a, int in_ch, const std::vector<int>& filters,
                    const std::vector<int>& strides, const std::string& tag) {
  for (std::size_t i = 0; i < filters.size(); ++i) {
    net.template add<nn::Conv2d<T>>(in_ch, filters[i], a.geometry(strides[i]), tag + std::to_string(i));
    net.template add<nn::ActivationLayer<T>>(nn::Activation::elu);
    in_ch = filters[i];
  }
}

/// Transposed stack walking the encoder sizes backwards; the last layer optionally ends in a
/// sigmoid instead of ELU.
template <class T>
void add_deconv_stack(nn::Sequential<T>& net, const TransceiverArch& a, int in_ch, const std::vector<int>& filters,
                      const std::vector<int>& enc_strides, const std::vector<int>& enc_sizes, bool sigmoid_out,
                      const std::string& tag) {
  const std::size_t L = filters.size();
  if (enc_strides.size() != L) throw ContractError(tag + ": decoder depth must mirror the encoder");
  int size = enc_sizes.back();
  for (std::size_t j = 0; j < L; ++j) {
    const std::size_t mirror = L - 1 - j;
    const int stride = enc_strides[mirror];
    const int target = enc_sizes[mirror];
    const auto g = a.geometry(stride);
    const int base = (size - 1) * stride - 2 * g.ph + g.kh;
    net.template add<nn::ConvTranspose2d<T>>(in_ch, filters[j], g, target - base, tag + std::to_string(j));
    const bool last = j + 1 == L;
    net.template add<nn::ActivationLayer<T>>(last && sigmoid_out ? nn::Activation::sigmoid : nn::Activation::elu);
    in_ch = filters[j];
    size = target;
  }
}

template <class T>
void initialize(nn::Sequential<T>& net, RngStream& rng, double scale) {
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (auto* c = dynamic_cast<nn::Conv2d<T>*>(&net.layer(i))) c->initialize(rng, scale);
    else if (auto* t = dynamic_cast<nn::ConvTranspose2d<T>*>(&net.layer(i))) t->initialize(rng, scale);
    else if (auto* d = dynamic_cast<nn::Dense<T>*>(&net.layer(i))) d->initialize(rng, scale);
  }
}

}  // namespace detail

/// One node's transceiver: semantic encoder, channel encoder, channel decoder, semantic
/// decoder, each with its own Adam state.
template <class T>
struct NodeState {
  NodeId id = NodeId::A;
  TransceiverArch arch;
  nn::Sequential<T> semantic_encoder{"semantic_encoder"};
  nn::Sequential<T> channel_encoder{"channel_encoder"};
  nn::Sequential<T> channel_decoder{"channel_decoder"};
  nn::Sequential<T> semantic_decoder{"semantic_decoder"};
  nn::Adam<T> semantic_encoder_opt, channel_encoder_opt, channel_decoder_opt, semantic_decoder_opt;

  /// Builds the networks and draws initial weights from the seed's init stream; two nodes
  /// created with the same seed start bit-identical.
  static NodeState create(NodeId id, const TransceiverArch& arch, std::uint64_t seed) {
    NodeState s;
    s.id = id;
    s.arch = arch;
    if (arch.code_channels() % 2 != 0) throw ContractError("channel encoder must emit an even number of channels");
    detail::add_conv_stack(s.semantic_encoder, arch, arch.image_channels, arch.semantic_filters, arch.semantic_strides, "se");
    detail::add_conv_stack(s.channel_encoder, arch, arch.feature_channels(), arch.channel_filters, arch.channel_strides, "ce");
    detail::add_deconv_stack(s.channel_decoder, arch, arch.code_channels(), arch.channel_decoder_filters, arch.channel_strides,
                             arch.channel_sizes(), false, "cd");
    if (arch.channel_decoder_filters.back() != arch.feature_channels())
      throw ContractError("channel decoder must end with the semantic feature depth");
    detail::add_deconv_stack(s.semantic_decoder, arch, arch.feature_channels(), arch.semantic_decoder_filters,
                             arch.semantic_strides, arch.semantic_sizes(), true, "sd");
    RngStream rng(seed, "init/transceiver");
    for (auto* net : s.networks()) detail::initialize(*net, rng, 1.0);
    return s;
  }

  std::array<nn::Sequential<T>*, 4> networks() {
    return {&semantic_encoder, &channel_encoder, &channel_decoder, &semantic_decoder};
  }
  std::array<nn::Adam<T>*, 4> optimizers() {
    return {&semantic_encoder_opt, &channel_encoder_opt, &channel_decoder_opt, &semantic_decoder_opt};
  }

  /// Every weight of every network, in a fixed order.
  std::vector<T> flat_weights() {
    std::vector<T> out;
    for (auto* net : networks()) {
      auto v = nn::flatten_values(*net);
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }

  bool weights_finite() {
    for (auto* net : networks())
      for (auto* p : net->parameters())
        for (T v : p->value)
          if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Result of the transmit chain; raw and scale are kept for the backward pass.
template <class T>
struct ChannelCode {
  SymbolBlock<T> x;    // unit-power symbols
  SymbolBlock<T> raw;  // packed encoder output before normalisation
  double scale = 1.0;
};

template <class T>
Tensor<T> semantic_encode(const Tensor<T>& images, NodeState<T>& node) {
  return node.semantic_encoder.forward(images);
}

template <class T>
ChannelCode<T> channel_encode(const Tensor<T>& features, NodeState<T>& node) {
  ChannelCode<T> out;
  out.raw = pack_symbols(node.channel_encoder.forward(features));
  auto n = normalize_power(out.raw);
  out.x = std::move(n.block);
  out.scale = n.scale;
  return out;
}

template <class T>
Tensor<T> channel_decode(const SymbolBlock<T>& y, NodeState<T>& node) {
  const auto& a = node.arch;
  if (y.symbols() != a.symbol_count())
    throw ContractError("receiver expects " + std::to_string(a.symbol_count()) + " symbols, got " + std::to_string(y.symbols()));
  return node.channel_decoder.forward(unpack_symbols(y, a.code_channels(), a.code_size(), a.code_size()));
}

template <class T>
Tensor<T> semantic_decode(const Tensor<T>& features, NodeState<T>& node) {
  return node.semantic_decoder.forward(features);
}

/// Images -> unit-power symbols.
template <class T>
ChannelCode<T> transmit(NodeState<T>& node, const Tensor<T>& images) {
  return channel_encode(semantic_encode(images, node), node);
}

/// Received symbols -> reconstructed images.
template <class T>
Tensor<T> receive(NodeState<T>& node, const SymbolBlock<T>& y) {
  return semantic_decode(channel_decode(y, node), node);
}

/// Backpropagates a symbol gradient through the last transmit() of this node.
template <class T>
void transmit_backward(NodeState<T>& node, const ChannelCode<T>& code, const SymbolBlock<T>& grad_x) {
  const auto g_raw = normalize_power_backward(code.raw, code.scale, grad_x);
  const auto& a = node.arch;
  auto g = node.channel_encoder.backward(unpack_symbols(g_raw, a.code_channels(), a.code_size(), a.code_size()));
  node.semantic_encoder.backward(g, nn::BackwardMode{true, false});
}

/// Backpropagates an image gradient through the last receive(); returns the symbol gradient.
/// With params == false the receiver weights only pass gradients through.
template <class T>
SymbolBlock<T> receive_backward(NodeState<T>& node, const Tensor<T>& grad_images, bool params) {
  auto g = node.semantic_decoder.backward(grad_images, nn::BackwardMode{params, true});
  g = node.channel_decoder.backward(g, nn::BackwardMode{params, true});
  return pack_symbols(g);
}

}  // namespace twsc
