#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "oodbench/tensor.hpp"

namespace oodbench {

enum class LayerKind : std::uint8_t { Dense = 0, Conv2D = 1, ReLU = 2 };

// Conv layers use valid padding. Dense layers flatten their input.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in = 0, out = 0;                              // dense
  std::size_t in_ch = 0, out_ch = 0, kh = 0, kw = 0, stride = 1;  // conv

  static LayerSpec dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in = in;
    s.out = out;
    return s;
  }
  static LayerSpec conv(std::size_t in_ch, std::size_t out_ch, std::size_t kh,
                        std::size_t kw, std::size_t stride = 1) {
    LayerSpec s;
    s.kind = LayerKind::Conv2D;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.kh = kh;
    s.kw = kw;
    s.stride = stride;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{}; }

  bool has_params() const { return kind != LayerKind::ReLU; }
};

struct Network {
  std::vector<std::size_t> input_shape;  // {C,H,W} or {D}
  std::vector<LayerSpec> layers;
  std::vector<Tensor> weights;  // empty tensor where the layer has none
  std::vector<Tensor> biases;
  std::vector<std::size_t> capture_points;  // record output of these layers

  std::size_t num_classes() const;
  std::size_t param_count() const;
};

// Shape of the output of layer `upto-1` given the input shape; `upto` equal
// to layers.size() gives the network output shape. Throws ShapeError when
// the chain is inconsistent.
std::vector<std::size_t> output_shape(const Network& net, std::size_t upto);

// Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases.
Network init_network(std::vector<std::size_t> input_shape,
                     std::vector<LayerSpec> layers,
                     std::vector<std::size_t> capture_points,
                     std::uint64_t seed);

struct ForwardTrace {
  std::vector<double> logits;
  std::map<std::size_t, std::vector<double>> captured;
  int prediction = 0;
  double confidence = 0.0;  // max softmax probability at T=1
};

// Per-layer outputs kept for backprop.
struct ForwardPass {
  Tensor input;
  std::vector<Tensor> outputs;
  const Tensor& layer_input(std::size_t i) const {
    return i == 0 ? input : outputs[i - 1];
  }
};

ForwardPass forward_pass(const Network& net, const Tensor& x);
ForwardTrace forward(const Network& net, const Tensor& x);

struct Gradients {
  std::vector<Tensor> weights, biases;
  Tensor input;
};

// Backprop of dLoss/dlogits; fills parameter gradients and the input gradient.
Gradients backward(const Network& net, const ForwardPass& pass,
                   const std::vector<double>& dlogits);

// Max-subtraction softmax of logits/T. T <= 0 -> ParameterError.
std::vector<double> softmax_temperature(const std::vector<double>& logits, double T);

// -log softmax(logits/T)[target], computed from shifted logits.
double nll_loss(const std::vector<double>& logits, int target, double T);

// Gradient of -log S_target(x; T) with respect to x. The adversarial path
// uses target = true label and T = 1 (plain cross-entropy); the confidence
// preprocessing path uses target = prediction and a large T.
Tensor input_gradient(const Network& net, const Tensor& x, int target, double T);

}  // namespace oodbench
