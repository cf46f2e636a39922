#pragma once

#include <cstdint>
#include <vector>

#include "oodbench/network.hpp"
#include "oodbench/tensor.hpp"

namespace oodbench {

enum class OptimizerKind : std::uint8_t { SGD = 0, Adam = 1, RMSProp = 2 };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct Example {
  Tensor image;
  int label = 0;
};

// Parameter-update state lives here; step() applies one mean-gradient update.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, const Network& net);
  void step(Network& net, const std::vector<Tensor>& gw, const std::vector<Tensor>& gb);

 private:
  void update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v);
  OptimizerKind kind_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<Tensor> mw_, vw_, mb_, vb_;
};

struct TrainResult {
  Network net;
  double train_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

// Cross-entropy training of the softmax head. Mini-batches with a per-epoch
// shuffle seeded from cfg.seed; epochs = 0 returns the network untouched.
// Throws TrainingDivergence naming the epoch when the loss goes non-finite.
TrainResult train_classifier(Network net, const std::vector<Example>& train,
                             const TrainConfig& cfg);

double accuracy(const Network& net, const std::vector<Example>& data);

struct Autoencoder {
  Network net;
  int class_id = -1;
  double train_loss_mean = 0.0;  // mean reconstruction MSE over training data
};

struct AutoencoderConfig {
  std::vector<std::size_t> hidden = {64, 16};  // encoder widths; mirrored decoder
  TrainConfig train;                           // optimizer must be Adam or RMSProp
};

// One reconstruction model for one class; all examples must carry the same
// label. MSE objective; the stored threshold is the mean final training loss.
Autoencoder train_autoencoder(const std::vector<Example>& class_data,
                              const AutoencoderConfig& cfg);

// Mean squared error between x and its reconstruction.
double reconstruction_loss(const Autoencoder& ae, const Tensor& x);

}  // namespace oodbench
