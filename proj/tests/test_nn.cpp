#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"

#include "oodbench/checkpoint.hpp"
#include "oodbench/errors.hpp"
#include "oodbench/network.hpp"
#include "oodbench/rng.hpp"
#include "oodbench/tensor.hpp"
#include "oodbench/training.hpp"

using namespace oodbench;

namespace {

// Loss as a plain function of the input, for finite differencing.
double loss_at(const Network& net, const Tensor& x, int target, double T) {
  return nll_loss(forward(net, x).logits, target, T);
}

Tensor central_diff(const Network& net, const Tensor& x, int target, double T, double h) {
  Tensor g(x.shape);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    probe[i] = x[i] + h;
    const double up = loss_at(net, probe, target, T);
    probe[i] = x[i] - h;
    const double dn = loss_at(net, probe, target, T);
    probe[i] = x[i];
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

double rel_error(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i] + b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

Network random_dense_net(Rng& rng, std::size_t in, std::size_t hid, std::size_t out) {
  Network net = init_network({in}, {LayerSpec::dense(in, hid), LayerSpec::relu(),
                                    LayerSpec::dense(hid, out)},
                             {}, rng.next_u64());
  return net;
}

std::vector<Example> two_blob_data(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> data;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (int cls = 0; cls < 2; ++cls) {
      Tensor x({2});
      const double cx = cls == 0 ? 0.2 : 0.8;
      x[0] = cx + rng.uniform(-0.1, 0.1);
      x[1] = cx + rng.uniform(-0.1, 0.1);
      data.push_back({x, cls});
    }
  }
  return data;
}

}  // namespace

TEST_CASE("softmax fixtures") {
  // 1 / (1 + e^-2)
  const auto p = softmax_temperature({2.0, 0.0}, 1.0);
  CHECK(p[0] == doctest::Approx(0.8807970779778823).epsilon(1e-15));
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-15));

  // 1 / (1 + e^-0.002)
  const auto q = softmax_temperature({0.001, -0.001}, 1.0);
  CHECK(q[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.002))).epsilon(1e-14));

  // Temperature flattens the distribution toward uniform.
  const auto flat = softmax_temperature({5.0, -5.0, 0.0}, 1000.0);
  for (double v : flat) CHECK(std::fabs(v - 1.0 / 3.0) < 0.005);

  // Uniform logits, any temperature.
  const auto u = softmax_temperature({3.0, 3.0, 3.0, 3.0}, 7.0);
  for (double v : u) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  CHECK_THROWS_AS(softmax_temperature({1.0}, 0.0), ParameterError);
  CHECK_THROWS_AS(softmax_temperature({1.0}, -1.0), ParameterError);
}

TEST_CASE("softmax is invariant to logit shifts") {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  const std::vector<double> b = {1001.0, 1002.0, 1003.0};
  const auto pa = softmax_temperature(a, 1.0);
  const auto pb = softmax_temperature(b, 1.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-12));
  // Huge logits must not overflow.
  const auto big = softmax_temperature({1e300, 0.0}, 1.0);
  CHECK(big[0] == 1.0);
  CHECK(big[1] == 0.0);
}

TEST_CASE("nll matches -log softmax") {
  const std::vector<double> logits = {0.3, -1.2, 2.0};
  for (int t = 0; t < 3; ++t) {
    const auto p = softmax_temperature(logits, 1.0);
    CHECK(nll_loss(logits, t, 1.0) == doctest::Approx(-std::log(p[t])).epsilon(1e-12));
  }
  const auto p2 = softmax_temperature(logits, 2.5);
  CHECK(nll_loss(logits, 1, 2.5) == doctest::Approx(-std::log(p2[1])).epsilon(1e-12));
}

TEST_CASE("dense forward agrees with a hand computation") {
  Network net = init_network({2}, {LayerSpec::dense(2, 2)}, {}, 0);
  net.weights[0] = Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0});  // row r = output unit r
  net.biases[0] = Tensor({2}, {0.5, -0.5});
  Tensor x({2}, {1.0, -1.0});
  const ForwardTrace t = forward(net, x);
  CHECK(t.logits[0] == doctest::Approx(1.0 * 1 + 2.0 * -1 + 0.5).epsilon(1e-15));
  CHECK(t.logits[1] == doctest::Approx(3.0 * 1 + 4.0 * -1 - 0.5).epsilon(1e-15));
  CHECK(t.prediction == 0);
}

TEST_CASE("conv forward agrees with a hand computation") {
  Network net = init_network({1, 3, 3},
                             {LayerSpec::conv(1, 1, 2, 2, 1), LayerSpec::dense(4, 2)}, {}, 0);
  net.weights[0] = Tensor({1, 1, 2, 2}, {1.0, 0.0, 0.0, -1.0});
  net.biases[0] = Tensor({1}, {0.25});
  Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const ForwardPass fp = forward_pass(net, x);
  const Tensor& conv_out = fp.outputs[0];
  REQUIRE(conv_out.shape == std::vector<std::size_t>({1, 2, 2}));
  // window top-left minus bottom-right, plus bias
  CHECK(conv_out.at3(0, 0, 0) == doctest::Approx(1.0 - 5.0 + 0.25).epsilon(1e-15));
  CHECK(conv_out.at3(0, 0, 1) == doctest::Approx(2.0 - 6.0 + 0.25).epsilon(1e-15));
  CHECK(conv_out.at3(0, 1, 0) == doctest::Approx(4.0 - 8.0 + 0.25).epsilon(1e-15));
  CHECK(conv_out.at3(0, 1, 1) == doctest::Approx(5.0 - 9.0 + 0.25).epsilon(1e-15));
}

TEST_CASE("conv stride changes the output grid") {
  Network net = init_network({1, 5, 5}, {LayerSpec::conv(1, 2, 3, 3, 2),
                                         LayerSpec::dense(8, 2)},
                             {}, 7);
  CHECK(output_shape(net, 1) == std::vector<std::size_t>({2, 2, 2}));
  CHECK(output_shape(net, 2) == std::vector<std::size_t>({2}));
}

TEST_CASE("shape errors carry the mismatch") {
  Network net = init_network({4}, {LayerSpec::dense(4, 2)}, {}, 1);
  Tensor bad({3});
  CHECK_THROWS_AS(forward(net, bad), ShapeError);
  // Conv on a flat vector cannot work.
  CHECK_THROWS_AS(init_network({4}, {LayerSpec::conv(1, 1, 2, 2), LayerSpec::dense(1, 2)},
                               {}, 1),
                  ShapeError);
}

TEST_CASE("argmax prefers the lowest index on ties") {
  Network net = init_network({2}, {LayerSpec::dense(2, 3)}, {}, 0);
  for (auto& w : net.weights) w.data.assign(w.data.size(), 0.0);
  for (auto& b : net.biases) b.data.assign(b.data.size(), 0.0);
  const ForwardTrace t = forward(net, Tensor({2}, {1.0, 2.0}));
  CHECK(t.prediction == 0);
  CHECK(t.confidence == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("capture points record the requested layer outputs") {
  Network net = init_network({2}, {LayerSpec::dense(2, 3), LayerSpec::relu(),
                                   LayerSpec::dense(3, 2)},
                             {1}, 11);
  Tensor x({2}, {0.3, -0.7});
  const ForwardTrace t = forward(net, x);
  REQUIRE(t.captured.count(1) == 1);
  const ForwardPass fp = forward_pass(net, x);
  const std::vector<double>& cap = t.captured.at(1);
  REQUIRE(cap.size() == fp.outputs[1].numel());
  for (std::size_t i = 0; i < cap.size(); ++i)
    CHECK(cap[i] == fp.outputs[1][i]);
  // ReLU output is non-negative by construction.
  for (double v : cap) CHECK(v >= 0.0);
}

TEST_CASE("glorot init is bounded, deterministic, and seed-sensitive") {
  const Network a = init_network({8}, {LayerSpec::dense(8, 4), LayerSpec::relu(),
                                       LayerSpec::dense(4, 2)},
                                 {}, 42);
  const Network b = init_network({8}, {LayerSpec::dense(8, 4), LayerSpec::relu(),
                                       LayerSpec::dense(4, 2)},
                                 {}, 42);
  const Network c = init_network({8}, {LayerSpec::dense(8, 4), LayerSpec::relu(),
                                       LayerSpec::dense(4, 2)},
                                 {}, 43);
  CHECK(a.weights[0].data == b.weights[0].data);
  CHECK(a.weights[2].data == b.weights[2].data);
  CHECK(a.weights[0].data != c.weights[0].data);
  const double limit0 = std::sqrt(6.0 / (8.0 + 4.0));
  for (double w : a.weights[0].data) CHECK(std::fabs(w) <= limit0);
  for (double v : a.biases[0].data) CHECK(v == 0.0);
  bool any_nonzero = false;
  for (double w : a.weights[0].data) any_nonzero = any_nonzero || w != 0.0;
  CHECK(any_nonzero);
}

TEST_CASE("input gradients match central differences") {
  Rng rng(2024);
  const double h = 1e-5;
  for (int trial = 0; trial < 8; ++trial) {
    Network net = random_dense_net(rng, 6, 10, 3);
    Tensor x({6});
    for (auto& v : x.data) v = rng.uniform(0.0, 1.0);
    const int target = static_cast<int>(rng.below(3));
    for (double T : {1.0, 1000.0}) {
      const Tensor g = input_gradient(net, x, target, T);
      const Tensor n = central_diff(net, x, target, T, h);
      CHECK(rel_error(g, n) < 1e-4);
    }
  }
}

TEST_CASE("input gradients flow through conv layers") {
  Rng rng(555);
  Network net = init_network({1, 6, 6},
                             {LayerSpec::conv(1, 3, 3, 3, 1), LayerSpec::relu(),
                              LayerSpec::dense(48, 3)},
                             {}, rng.next_u64());
  Tensor x({1, 6, 6});
  for (auto& v : x.data) v = rng.uniform(0.1, 0.9);
  const Tensor g = input_gradient(net, x, 1, 1.0);
  const Tensor n = central_diff(net, x, 1, 1.0, 1e-5);
  CHECK(rel_error(g, n) < 1e-4);
}

TEST_CASE("parameter gradients match finite differences") {
  Rng rng(77);
  Network net = random_dense_net(rng, 4, 6, 2);
  Tensor x({4});
  for (auto& v : x.data) v = rng.uniform(0.0, 1.0);
  const int target = 1;

  const ForwardPass fp = forward_pass(net, x);
  const std::vector<double> logits(fp.outputs.back().data.begin(),
                                   fp.outputs.back().data.end());
  const auto probs = softmax_temperature(logits, 1.0);
  std::vector<double> dlogits = probs;
  dlogits[static_cast<std::size_t>(target)] -= 1.0;
  const Gradients g = backward(net, fp, dlogits);

  const double h = 1e-6;
  const auto close = [](double a, double b) {
    return std::fabs(a - b) < 1e-6 + 1e-4 * std::fabs(b);
  };
  for (std::size_t li : {std::size_t{0}, std::size_t{2}}) {
    for (std::size_t wi = 0; wi < std::min<std::size_t>(5, net.weights[li].numel()); ++wi) {
      Network probe = net;
      probe.weights[li][wi] += h;
      const double up = loss_at(probe, x, target, 1.0);
      probe.weights[li][wi] -= 2.0 * h;
      const double dn = loss_at(probe, x, target, 1.0);
      CHECK(close(g.weights[li][wi], (up - dn) / (2.0 * h)));
    }
    Network probe = net;
    probe.biases[li][0] += h;
    const double up = loss_at(probe, x, target, 1.0);
    probe.biases[li][0] -= 2.0 * h;
    const double dn = loss_at(probe, x, target, 1.0);
    CHECK(close(g.biases[li][0], (up - dn) / (2.0 * h)));
  }
}

TEST_CASE("training separates two blobs with every optimizer") {
  const auto data = two_blob_data(40, 5);
  for (OptimizerKind opt : {OptimizerKind::SGD, OptimizerKind::Adam, OptimizerKind::RMSProp}) {
    TrainConfig cfg;
    cfg.optimizer = opt;
    cfg.lr = opt == OptimizerKind::SGD ? 0.5 : 0.05;
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.seed = 3;
    Network net = init_network({2}, {LayerSpec::dense(2, 8), LayerSpec::relu(),
                                     LayerSpec::dense(8, 2)},
                               {}, 9);
    const TrainResult r = train_classifier(net, data, cfg);
    CHECK(r.train_accuracy == 1.0);
    REQUIRE(r.epoch_loss.size() == 30);
    CHECK(r.epoch_loss.back() < r.epoch_loss.front());
    CHECK(accuracy(r.net, data) == 1.0);
  }
}

TEST_CASE("training is deterministic per seed") {
  const auto data = two_blob_data(20, 8);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.seed = 21;
  Network net = init_network({2}, {LayerSpec::dense(2, 4), LayerSpec::relu(),
                                   LayerSpec::dense(4, 2)},
                             {}, 1);
  const TrainResult a = train_classifier(net, data, cfg);
  const TrainResult b = train_classifier(net, data, cfg);
  CHECK(a.net.weights[0].data == b.net.weights[0].data);
  CHECK(a.epoch_loss == b.epoch_loss);
  cfg.seed = 22;
  const TrainResult c = train_classifier(net, data, cfg);
  CHECK(a.net.weights[0].data != c.net.weights[0].data);
}

TEST_CASE("zero epochs return the network untouched") {
  const auto data = two_blob_data(5, 2);
  TrainConfig cfg;
  cfg.epochs = 0;
  Network net = init_network({2}, {LayerSpec::dense(2, 2)}, {}, 4);
  const TrainResult r = train_classifier(net, data, cfg);
  CHECK(r.net.weights[0].data == net.weights[0].data);
  CHECK(r.epoch_loss.empty());
}

TEST_CASE("an absurd learning rate raises a divergence error") {
  const auto data = two_blob_data(10, 6);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::SGD;
  cfg.lr = 1e155;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.seed = 1;
  Network net = init_network({2}, {LayerSpec::dense(2, 4), LayerSpec::relu(),
                                   LayerSpec::dense(4, 2)},
                             {}, 2);
  CHECK_THROWS_AS(train_classifier(net, data, cfg), TrainingDivergence);
}

TEST_CASE("training rejects labels outside the head") {
  std::vector<Example> data = two_blob_data(5, 3);
  data[0].label = 9;
  TrainConfig cfg;
  cfg.epochs = 1;
  Network net = init_network({2}, {LayerSpec::dense(2, 2)}, {}, 4);
  CHECK_THROWS_AS(train_classifier(net, data, cfg), DataError);
}

TEST_CASE("autoencoder training learns its class and reports the mean loss") {
  Rng rng(31);
  std::vector<Example> data;
  for (int i = 0; i < 30; ++i) {
    Tensor x({1, 4, 4});
    for (auto& v : x.data) v = 0.5 + rng.uniform(-0.05, 0.05);
    data.push_back({x, 3});
  }
  AutoencoderConfig cfg;
  cfg.hidden = {8, 4};
  cfg.train.optimizer = OptimizerKind::Adam;
  cfg.train.lr = 0.01;
  cfg.train.epochs = 40;
  cfg.train.batch_size = 8;
  cfg.train.seed = 12;
  const Autoencoder ae = train_autoencoder(data, cfg);
  CHECK(ae.class_id == 3);
  double mean = 0.0;
  for (const Example& e : data) mean += reconstruction_loss(ae, e.image);
  mean /= static_cast<double>(data.size());
  CHECK(ae.train_loss_mean == doctest::Approx(mean).epsilon(1e-12));
  // Near-constant inputs reconstruct well.
  CHECK(ae.train_loss_mean < 0.01);
}

TEST_CASE("autoencoder config validation") {
  std::vector<Example> data = {{Tensor({1, 2, 2}), 0}, {Tensor({1, 2, 2}), 1}};
  AutoencoderConfig cfg;
  CHECK_THROWS_AS(train_autoencoder(data, cfg), DataError);  // mixed labels
  data[1].label = 0;
  cfg.train.optimizer = OptimizerKind::SGD;
  CHECK_THROWS_AS(train_autoencoder(data, cfg), ParameterError);
  cfg.train.optimizer = OptimizerKind::Adam;
  CHECK_THROWS_AS(train_autoencoder({}, cfg), DataError);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  Network net = init_network({1, 4, 4},
                             {LayerSpec::conv(1, 2, 3, 3, 1), LayerSpec::relu(),
                              LayerSpec::dense(8, 3)},
                             {1}, 99);
  const auto bytes = serialize_network(net, 0xABCDEF0123456789ULL);
  std::uint64_t hash = 0;
  const Network back = deserialize_network(bytes, &hash);
  CHECK(hash == 0xABCDEF0123456789ULL);
  CHECK(back.input_shape == net.input_shape);
  CHECK(back.capture_points == net.capture_points);
  REQUIRE(back.layers.size() == net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(back.layers[i].kind == net.layers[i].kind);
    CHECK(back.weights[i].data == net.weights[i].data);
    CHECK(back.biases[i].data == net.biases[i].data);
  }
  // Identical inputs produce identical traces.
  Tensor x({1, 4, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i) / 16.0;
  const ForwardTrace ta = forward(net, x);
  const ForwardTrace tb = forward(back, x);
  CHECK(ta.logits == tb.logits);
  // Serialization is stable under a round trip.
  CHECK(serialize_network(back, 0xABCDEF0123456789ULL) == bytes);
}

TEST_CASE("checkpoint reader rejects malformed bytes") {
  Network net = init_network({2}, {LayerSpec::dense(2, 2)}, {}, 0);
  auto bytes = serialize_network(net, 1);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_network(bad), FormatError);
  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  CHECK_THROWS_AS(deserialize_network(truncated), FormatError);
  CHECK_THROWS_AS(deserialize_network({}), FormatError);
}
