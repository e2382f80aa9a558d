#pragma once

#include <string_view>
#include <utility>
#include <vector>

#include "monet/rng.hpp"
#include "monet/tensor.hpp"

namespace monet {

enum class LayerKind { conv2d, dense, relu, sigmoid, upsample2x, concat_channels };

std::string_view to_string(LayerKind kind);

/// One differentiable building block.
///
/// conv2d: params {kernel [outC, inC, k, k], bias [outC]}, input/output [H, W, C],
///         zero padding of (k - 1) / 2, so odd kernels keep the size and a
///         k = stride kernel tiles the input.
/// dense:  params {weight [out, in], bias [out]}, input [..., in].
/// upsample2x: nearest neighbour on [H, W, C].
/// concat_channels: two [H, W, *] inputs joined along C.
struct Layer {
  LayerKind kind = LayerKind::relu;
  std::vector<Tensor> params;
  int kernel = 0;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;

  static Layer of_kind(LayerKind kind) {
    Layer l;
    l.kind = kind;
    return l;
  }
  static Layer conv2d(int in_channels, int out_channels, int kernel, int stride, Rng& rng);
  static Layer dense(int in_features, int out_features, Rng& rng);
  static Layer relu() { return of_kind(LayerKind::relu); }
  static Layer sigmoid() { return of_kind(LayerKind::sigmoid); }
  static Layer upsample2x() { return of_kind(LayerKind::upsample2x); }
  static Layer concat_channels() { return of_kind(LayerKind::concat_channels); }

  Tensor& weight() { return params.at(0); }
  const Tensor& weight() const { return params.at(0); }
  Tensor& bias() { return params.at(1); }
  const Tensor& bias() const { return params.at(1); }

  bool has_params() const { return !params.empty(); }
  void zero_grad();
};

struct LayerGrads {
  Tensor input_grad;
  std::vector<Tensor> param_grads;
};

Tensor apply_layer(const Layer& layer, const Tensor& input);
/// Two-input form, only valid for concat_channels.
Tensor apply_layer(const Layer& layer, const Tensor& a, const Tensor& b);

/// Exact gradients of apply_layer given the forward input and dL/d(output).
LayerGrads backprop(const Layer& layer, const Tensor& input, const Tensor& upstream);
/// Gradients of the concat_channels form: {dL/da, dL/db}.
std::pair<Tensor, Tensor> backprop_concat(const Tensor& a, const Tensor& b,
                                          const Tensor& upstream);

/// Adds param_grads into the grad buffers of layer.params.
void accumulate(Layer& layer, const LayerGrads& grads);

double sigmoid(double z);

// Elementwise helpers shared by the network code.
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
/// Channel slice [c0, c0 + count) of an [H, W, C] tensor.
Tensor slice_channels(const Tensor& t, std::size_t c0, std::size_t count);

}  // namespace monet
