#include "oodbench/network.hpp"

#include <algorithm>
#include <cmath>

#include "oodbench/errors.hpp"
#include "oodbench/rng.hpp"

namespace oodbench {

namespace {

std::vector<std::size_t> conv_out_shape(const LayerSpec& s,
                                        const std::vector<std::size_t>& in) {
  if (in.size() != 3)
    throw ShapeError("conv layer needs a {C,H,W} input, got " + shape_str(in));
  if (in[0] != s.in_ch)
    throw ShapeError("conv layer expects " + std::to_string(s.in_ch) +
                     " channels, got " + std::to_string(in[0]));
  if (s.kh == 0 || s.kw == 0 || s.stride == 0)
    throw ParameterError("conv kernel and stride must be positive");
  if (in[1] < s.kh || in[2] < s.kw)
    throw ShapeError("conv kernel larger than input " + shape_str(in));
  const std::size_t oh = (in[1] - s.kh) / s.stride + 1;
  const std::size_t ow = (in[2] - s.kw) / s.stride + 1;
  return {s.out_ch, oh, ow};
}

std::vector<std::size_t> layer_out_shape(const LayerSpec& s,
                                         const std::vector<std::size_t>& in) {
  switch (s.kind) {
    case LayerKind::Dense:
      if (Tensor::numel_of(in) != s.in)
        throw ShapeError("dense layer expects " + std::to_string(s.in) +
                         " inputs, got " + shape_str(in));
      return {s.out};
    case LayerKind::Conv2D:
      return conv_out_shape(s, in);
    case LayerKind::ReLU:
      return in;
  }
  throw ParameterError("unknown layer kind");
}

}  // namespace

std::size_t Network::num_classes() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it)
    if (it->kind == LayerKind::Dense) return it->out;
  throw ShapeError("network has no dense output head");
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < layers.size(); ++i)
    n += weights[i].numel() + biases[i].numel();
  return n;
}

std::vector<std::size_t> output_shape(const Network& net, std::size_t upto) {
  std::vector<std::size_t> cur = net.input_shape;
  for (std::size_t i = 0; i < upto; ++i) cur = layer_out_shape(net.layers[i], cur);
  return cur;
}

Network init_network(std::vector<std::size_t> input_shape,
                     std::vector<LayerSpec> layers,
                     std::vector<std::size_t> capture_points,
                     std::uint64_t seed) {
  if (layers.empty()) throw ParameterError("network needs at least one layer");
  if (layers.back().kind != LayerKind::Dense)
    throw ShapeError("network must end in a dense head");
  Network net;
  net.input_shape = std::move(input_shape);
  net.layers = std::move(layers);
  net.capture_points = std::move(capture_points);
  for (std::size_t c : net.capture_points)
    if (c >= net.layers.size())
      throw ParameterError("capture point past last layer");

  // Validates the whole chain before any allocation.
  output_shape(net, net.layers.size());

  Rng rng(seed);
  net.weights.resize(net.layers.size());
  net.biases.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& s = net.layers[i];
    if (s.kind == LayerKind::Dense) {
      const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
      net.weights[i] = Tensor({s.out, s.in});
      for (double& w : net.weights[i].data) w = rng.uniform(-limit, limit);
      net.biases[i] = Tensor({s.out});
    } else if (s.kind == LayerKind::Conv2D) {
      const std::size_t fan_in = s.in_ch * s.kh * s.kw;
      const std::size_t fan_out = s.out_ch * s.kh * s.kw;
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      net.weights[i] = Tensor({s.out_ch, s.in_ch, s.kh, s.kw});
      for (double& w : net.weights[i].data) w = rng.uniform(-limit, limit);
      net.biases[i] = Tensor({s.out_ch});
    }
  }
  return net;
}

ForwardPass forward_pass(const Network& net, const Tensor& x) {
  if (Tensor::numel_of(x.shape) != Tensor::numel_of(net.input_shape) ||
      x.shape != net.input_shape)
    throw ShapeError("input shape " + shape_str(x.shape) +
                     " does not match network input " + shape_str(net.input_shape));
  ForwardPass pass;
  pass.input = x;
  pass.outputs.reserve(net.layers.size());
  const Tensor* cur = &pass.input;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const LayerSpec& s = net.layers[li];
    Tensor out;
    if (s.kind == LayerKind::Dense) {
      if (cur->numel() != s.in)
        throw ShapeError("dense layer input size mismatch");
      out = Tensor({s.out});
      const double* w = net.weights[li].data.data();
      const double* b = net.biases[li].data.data();
      const double* xin = cur->data.data();
      for (std::size_t o = 0; o < s.out; ++o) {
        double acc = b[o];
        const double* row = w + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * xin[i];
        out.data[o] = acc;
      }
    } else if (s.kind == LayerKind::Conv2D) {
      const std::vector<std::size_t> oshape = conv_out_shape(s, cur->shape);
      out = Tensor(oshape);
      const std::size_t ih = cur->shape[1], iw = cur->shape[2];
      const std::size_t oh = oshape[1], ow = oshape[2];
      const double* w = net.weights[li].data.data();
      const double* b = net.biases[li].data.data();
      const double* xin = cur->data.data();
      for (std::size_t oc = 0; oc < s.out_ch; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            double acc = b[oc];
            for (std::size_t ic = 0; ic < s.in_ch; ++ic) {
              for (std::size_t ky = 0; ky < s.kh; ++ky) {
                const double* xrow =
                    xin + (ic * ih + oy * s.stride + ky) * iw + ox * s.stride;
                const double* wrow = w + ((oc * s.in_ch + ic) * s.kh + ky) * s.kw;
                for (std::size_t kx = 0; kx < s.kw; ++kx) acc += wrow[kx] * xrow[kx];
              }
            }
            out.data[(oc * oh + oy) * ow + ox] = acc;
          }
        }
      }
    } else {  // ReLU
      out = *cur;
      for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    }
    pass.outputs.push_back(std::move(out));
    cur = &pass.outputs.back();
  }
  return pass;
}

ForwardTrace forward(const Network& net, const Tensor& x) {
  const ForwardPass pass = forward_pass(net, x);
  ForwardTrace trace;
  trace.logits = pass.outputs.back().data;
  for (std::size_t c : net.capture_points) trace.captured[c] = pass.outputs[c].data;
  const auto probs = softmax_temperature(trace.logits, 1.0);
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  trace.prediction = static_cast<int>(best);
  trace.confidence = probs[best];
  return trace;
}

Gradients backward(const Network& net, const ForwardPass& pass,
                   const std::vector<double>& dlogits) {
  if (dlogits.size() != pass.outputs.back().numel())
    throw ShapeError("dlogits size does not match network output");
  Gradients g;
  g.weights.resize(net.layers.size());
  g.biases.resize(net.layers.size());

  Tensor grad = Tensor(pass.outputs.back().shape, dlogits);
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const LayerSpec& s = net.layers[li];
    const Tensor& lin = pass.layer_input(li);
    Tensor dprev(lin.shape);
    if (s.kind == LayerKind::Dense) {
      g.weights[li] = Tensor({s.out, s.in});
      g.biases[li] = Tensor({s.out});
      const double* w = net.weights[li].data.data();
      const double* xin = lin.data.data();
      for (std::size_t o = 0; o < s.out; ++o) {
        const double go = grad.data[o];
        g.biases[li].data[o] = go;
        double* gw = g.weights[li].data.data() + o * s.in;
        const double* row = w + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) {
          gw[i] = go * xin[i];
          dprev.data[i] += go * row[i];
        }
      }
    } else if (s.kind == LayerKind::Conv2D) {
      g.weights[li] = Tensor(net.weights[li].shape);
      g.biases[li] = Tensor(net.biases[li].shape);
      const std::size_t ih = lin.shape[1], iw = lin.shape[2];
      const std::size_t oh = grad.shape[1], ow = grad.shape[2];
      const double* w = net.weights[li].data.data();
      const double* xin = lin.data.data();
      for (std::size_t oc = 0; oc < s.out_ch; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double go = grad.data[(oc * oh + oy) * ow + ox];
            g.biases[li].data[oc] += go;
            for (std::size_t ic = 0; ic < s.in_ch; ++ic) {
              for (std::size_t ky = 0; ky < s.kh; ++ky) {
                const std::size_t base = (ic * ih + oy * s.stride + ky) * iw + ox * s.stride;
                double* gw = g.weights[li].data.data() + ((oc * s.in_ch + ic) * s.kh + ky) * s.kw;
                const double* wrow = w + ((oc * s.in_ch + ic) * s.kh + ky) * s.kw;
                for (std::size_t kx = 0; kx < s.kw; ++kx) {
                  gw[kx] += go * xin[base + kx];
                  dprev.data[base + kx] += go * wrow[kx];
                }
              }
            }
          }
        }
      }
    } else {  // ReLU: subgradient 0 at exactly 0
      for (std::size_t i = 0; i < grad.data.size(); ++i)
        dprev.data[i] = lin.data[i] > 0.0 ? grad.data[i] : 0.0;
    }
    grad = std::move(dprev);
  }
  g.input = std::move(grad);
  return g;
}

std::vector<double> softmax_temperature(const std::vector<double>& logits, double T) {
  if (!(T > 0.0)) throw ParameterError("softmax temperature must be positive");
  if (logits.empty()) throw ShapeError("softmax of empty logits");
  double m = logits[0] / T;
  for (double l : logits) m = std::max(m, l / T);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] / T - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double nll_loss(const std::vector<double>& logits, int target, double T) {
  if (!(T > 0.0)) throw ParameterError("softmax temperature must be positive");
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size())
    throw ParameterError("loss target out of range");
  double m = logits[0] / T;
  for (double l : logits) m = std::max(m, l / T);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l / T - m);
  return std::log(sum) - (logits[static_cast<std::size_t>(target)] / T - m);
}

Tensor input_gradient(const Network& net, const Tensor& x, int target, double T) {
  const ForwardPass pass = forward_pass(net, x);
  const std::vector<double>& logits = pass.outputs.back().data;
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size())
    throw ParameterError("gradient target out of range");
  const std::vector<double> p = softmax_temperature(logits, T);
  std::vector<double> dlogits(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dlogits[i] = (p[i] - (static_cast<int>(i) == target ? 1.0 : 0.0)) / T;
  }
  return backward(net, pass, dlogits).input;
}

}  // namespace oodbench
