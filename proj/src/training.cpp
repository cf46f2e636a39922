#include "oodbench/training.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "oodbench/errors.hpp"
#include "oodbench/rng.hpp"

namespace oodbench {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kRmsRho = 0.9;
constexpr double kRmsEps = 1e-8;

void accumulate(std::vector<Tensor>& acc, const std::vector<Tensor>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i)
    for (std::size_t j = 0; j < acc[i].data.size(); ++j) acc[i].data[j] += g[i].data[j];
}

void scale(std::vector<Tensor>& acc, double f) {
  for (Tensor& t : acc)
    for (double& v : t.data) v *= f;
}

std::vector<Tensor> zeros_like(const std::vector<Tensor>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Tensor& p : params) out.push_back(Tensor(p.shape));
  return out;
}

}  // namespace

Optimizer::Optimizer(OptimizerKind kind, double lr, const Network& net)
    : kind_(kind), lr_(lr) {
  if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
  if (kind_ != OptimizerKind::SGD) {
    mw_ = zeros_like(net.weights);
    vw_ = zeros_like(net.weights);
    mb_ = zeros_like(net.biases);
    vb_ = zeros_like(net.biases);
  }
}

void Optimizer::update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v) {
  switch (kind_) {
    case OptimizerKind::SGD:
      for (std::size_t i = 0; i < param.data.size(); ++i)
        param.data[i] -= lr_ * grad.data[i];
      break;
    case OptimizerKind::Adam: {
      const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < param.data.size(); ++i) {
        const double g = grad.data[i];
        m.data[i] = kAdamBeta1 * m.data[i] + (1.0 - kAdamBeta1) * g;
        v.data[i] = kAdamBeta2 * v.data[i] + (1.0 - kAdamBeta2) * g * g;
        const double mhat = m.data[i] / c1;
        const double vhat = v.data[i] / c2;
        param.data[i] -= lr_ * mhat / (std::sqrt(vhat) + kAdamEps);
      }
      break;
    }
    case OptimizerKind::RMSProp:
      for (std::size_t i = 0; i < param.data.size(); ++i) {
        const double g = grad.data[i];
        v.data[i] = kRmsRho * v.data[i] + (1.0 - kRmsRho) * g * g;
        param.data[i] -= lr_ * g / (std::sqrt(v.data[i]) + kRmsEps);
      }
      break;
  }
}

void Optimizer::step(Network& net, const std::vector<Tensor>& gw,
                     const std::vector<Tensor>& gb) {
  ++t_;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.layers[i].has_params()) continue;
    if (kind_ == OptimizerKind::SGD) {
      Tensor dummy;
      update(net.weights[i], gw[i], dummy, dummy);
      update(net.biases[i], gb[i], dummy, dummy);
    } else {
      update(net.weights[i], gw[i], mw_[i], vw_[i]);
      update(net.biases[i], gb[i], mb_[i], vb_[i]);
    }
  }
}

double accuracy(const Network& net, const std::vector<Example>& data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const Example& e : data) {
    if (forward(net, e.image).prediction == e.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train_classifier(Network net, const std::vector<Example>& train,
                             const TrainConfig& cfg) {
  if (train.empty()) throw DataError("empty training set");
  if (cfg.batch_size == 0) throw ParameterError("batch size must be positive");
  const std::size_t num_classes = net.num_classes();
  std::set<int> seen;
  for (const Example& e : train) {
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= num_classes)
      throw DataError("label " + std::to_string(e.label) + " outside head width " +
                      std::to_string(num_classes));
    seen.insert(e.label);
  }
  if (seen.size() < 2) throw DataError("training set must contain at least 2 classes");

  TrainResult result;
  Rng rng(cfg.seed);
  Optimizer opt(cfg.optimizer, cfg.lr, net);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<Tensor> gw = zeros_like(net.weights);
      std::vector<Tensor> gb = zeros_like(net.biases);
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        const Example& e = train[order[bi]];
        const ForwardPass pass = forward_pass(net, e.image);
        const std::vector<double>& logits = pass.outputs.back().data;
        batch_loss += nll_loss(logits, e.label, 1.0);
        std::vector<double> dlogits = softmax_temperature(logits, 1.0);
        dlogits[static_cast<std::size_t>(e.label)] -= 1.0;
        const Gradients g = backward(net, pass, dlogits);
        accumulate(gw, g.weights);
        accumulate(gb, g.biases);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      batch_loss *= inv;
      if (!std::isfinite(batch_loss))
        throw TrainingDivergence(epoch, "non-finite loss in epoch " + std::to_string(epoch));
      scale(gw, inv);
      scale(gb, inv);
      opt.step(net, gw, gb);
      epoch_loss_sum += batch_loss * static_cast<double>(stop - start);
    }
    result.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(train.size()));
  }

  result.net = std::move(net);
  result.train_accuracy = accuracy(result.net, train);
  return result;
}

Autoencoder train_autoencoder(const std::vector<Example>& class_data,
                              const AutoencoderConfig& cfg) {
  if (class_data.empty()) throw DataError("empty autoencoder training set");
  if (cfg.train.optimizer == OptimizerKind::SGD)
    throw ParameterError("autoencoder optimizer must be adam or rmsprop");
  if (cfg.hidden.empty()) throw ParameterError("autoencoder needs hidden widths");
  if (cfg.train.batch_size == 0) throw ParameterError("batch size must be positive");
  const int label = class_data.front().label;
  const std::vector<std::size_t> in_shape = class_data.front().image.shape;
  const std::size_t dim = Tensor::numel_of(in_shape);
  for (const Example& e : class_data) {
    if (e.label != label)
      throw DataError("autoencoder training data mixes labels " + std::to_string(label) +
                      " and " + std::to_string(e.label));
    if (e.image.shape != in_shape)
      throw ShapeError("autoencoder training data mixes image shapes");
  }

  // Mirrored dense stack with a linear reconstruction head:
  // dim -> hidden... -> dim. Decoder output shape equals encoder input shape.
  std::vector<LayerSpec> layers;
  std::size_t prev = dim;
  for (std::size_t h : cfg.hidden) {
    layers.push_back(LayerSpec::dense(prev, h));
    layers.push_back(LayerSpec::relu());
    prev = h;
  }
  for (std::size_t i = cfg.hidden.size(); i-- > 1;) {
    layers.push_back(LayerSpec::dense(prev, cfg.hidden[i - 1]));
    layers.push_back(LayerSpec::relu());
    prev = cfg.hidden[i - 1];
  }
  layers.push_back(LayerSpec::dense(prev, dim));

  Autoencoder ae;
  ae.class_id = label;
  ae.net = init_network({dim}, std::move(layers), {}, cfg.train.seed);

  Rng rng(mix_seed(cfg.train.seed, 1));
  Optimizer opt(cfg.train.optimizer, cfg.train.lr, ae.net);
  std::vector<std::size_t> order(class_data.size());
  std::iota(order.begin(), order.end(), 0);
  Tensor flat({dim});

  for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.train.batch_size);
      std::vector<Tensor> gw = zeros_like(ae.net.weights);
      std::vector<Tensor> gb = zeros_like(ae.net.biases);
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        const Example& e = class_data[order[bi]];
        flat.data = e.image.data;
        const ForwardPass pass = forward_pass(ae.net, flat);
        const std::vector<double>& recon = pass.outputs.back().data;
        std::vector<double> dout(dim);
        double mse = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
          const double diff = recon[i] - flat.data[i];
          mse += diff * diff;
          dout[i] = 2.0 * diff / static_cast<double>(dim);
        }
        batch_loss += mse / static_cast<double>(dim);
        const Gradients g = backward(ae.net, pass, dout);
        accumulate(gw, g.weights);
        accumulate(gb, g.biases);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      batch_loss *= inv;
      if (!std::isfinite(batch_loss))
        throw TrainingDivergence(epoch, "non-finite loss in epoch " + std::to_string(epoch));
      scale(gw, inv);
      scale(gb, inv);
      opt.step(ae.net, gw, gb);
    }
  }

  double loss_sum = 0.0;
  for (const Example& e : class_data) {
    flat.data = e.image.data;
    loss_sum += reconstruction_loss(ae, flat);
  }
  ae.train_loss_mean = loss_sum / static_cast<double>(class_data.size());
  return ae;
}

double reconstruction_loss(const Autoencoder& ae, const Tensor& x) {
  const std::size_t dim = Tensor::numel_of(ae.net.input_shape);
  if (x.numel() != dim)
    throw ShapeError("reconstruction input has " + std::to_string(x.numel()) +
                     " values, model expects " + std::to_string(dim));
  Tensor flat({dim});
  flat.data = x.data;
  const ForwardPass pass = forward_pass(ae.net, flat);
  const std::vector<double>& recon = pass.outputs.back().data;
  double mse = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double diff = recon[i] - flat.data[i];
    mse += diff * diff;
  }
  return mse / static_cast<double>(dim);
}

}  // namespace oodbench
