#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "oodbench/bytes.hpp"
#include "oodbench/network.hpp"
#include "oodbench/reducers.hpp"
#include "oodbench/tensor.hpp"
#include "oodbench/training.hpp"

namespace oodbench {

// Runtime safety monitor. Given the model, one input, and the forward trace
// the model produced for it, decide whether the prediction should be
// withheld (true = raise the flag).
class Monitor {
 public:
  virtual ~Monitor() = default;
  virtual bool detect(const Network& net, const Tensor& x,
                      const ForwardTrace& trace) const = 0;
  virtual std::string kind() const = 0;
  virtual void serialize_payload(ByteWriter& w) const = 0;
};

// ---------- activation boxes ----------

struct Box2 {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{0.0, 0.0};
};

struct OobConfig {
  double gamma = 0.0;       // box inflation factor
  std::size_t clusters = 3;  // clusters per class; 0 behaves as 1
  bool use_elbow = false;    // pick the per-class count by the elbow rule
  std::size_t elbow_max = 6;
  ReducerKind reducer = ReducerKind::Pca;
  std::size_t isomap_neighbors = 10;
  std::uint64_t seed = 0;
};

// Boxes around clusters of reduced activations of correctly classified
// training inputs; an input is flagged when its activation point falls
// outside every box of the predicted class.
class OobMonitor : public Monitor {
 public:
  OobMonitor(std::size_t capture_index, Reducer reducer,
             std::vector<std::vector<Box2>> class_boxes, double gamma);

  bool detect(const Network& net, const Tensor& x,
              const ForwardTrace& trace) const override;
  std::string kind() const override { return "oob"; }
  void serialize_payload(ByteWriter& w) const override;
  static std::unique_ptr<OobMonitor> deserialize_payload(ByteReader& r);

  // Same boxes, different inflation; used by threshold sweeps.
  OobMonitor with_gamma(double gamma) const;

  // True when the point lies outside every inflated box of the class.
  bool outside_boxes(std::size_t cls, const std::array<double, 2>& p) const;

  double gamma() const { return gamma_; }
  std::size_t capture_index() const { return capture_index_; }
  const Reducer& reducer() const { return reducer_; }
  const std::vector<std::vector<Box2>>& class_boxes() const { return class_boxes_; }

 private:
  std::size_t capture_index_;
  Reducer reducer_;
  std::vector<std::vector<Box2>> class_boxes_;  // index = class id
  double gamma_;
};

OobMonitor fit_oob(const Network& net, const std::vector<Example>& train,
                   const OobConfig& cfg);

// ---------- confidence with input preprocessing ----------

// Flags when the temperature-scaled confidence of the nudged input falls
// below the smallest such confidence seen over the calibration set.
class OdinMonitor : public Monitor {
 public:
  OdinMonitor(double temperature, double epsilon, double delta);

  bool detect(const Network& net, const Tensor& x,
              const ForwardTrace& trace) const override;
  std::string kind() const override { return "odin"; }
  void serialize_payload(ByteWriter& w) const override;
  static std::unique_ptr<OdinMonitor> deserialize_payload(ByteReader& r);

  double temperature() const { return temperature_; }
  double epsilon() const { return epsilon_; }
  double delta() const { return delta_; }

 private:
  double temperature_;
  double epsilon_;
  double delta_;
};

// Max softmax probability at the given temperature after nudging the input
// toward the predicted class and clipping back to [0,1]. Calibration and
// detection share this path so the two agree bit for bit.
double preprocessed_confidence(const Network& net, const Tensor& x,
                               double temperature, double epsilon);

OdinMonitor fit_odin(const Network& net, const std::vector<Example>& calibration,
                     double temperature, double epsilon);

// ---------- reconstruction distance ----------

struct ReconConfig {
  std::vector<std::size_t> hidden = {64, 16};
  TrainConfig train;  // Adam or RMSProp
};

// One autoencoder per class; flags when the reconstruction error of the
// input exceeds the mean training loss of the predicted class's model.
// Predictions without a model always flag.
class ReconMonitor : public Monitor {
 public:
  explicit ReconMonitor(std::vector<Autoencoder> models);

  bool detect(const Network& net, const Tensor& x,
              const ForwardTrace& trace) const override;
  std::string kind() const override { return "recon"; }
  void serialize_payload(ByteWriter& w) const override;
  static std::unique_ptr<ReconMonitor> deserialize_payload(ByteReader& r);

  const Autoencoder* model_for(int cls) const;
  double threshold_for(int cls) const;
  void set_threshold(int cls, double t);  // test hook

 private:
  std::map<int, Autoencoder> models_;
  std::map<int, double> thresholds_;
};

ReconMonitor fit_recon(const std::vector<Example>& train, const ReconConfig& cfg);

// ---------- monitor container ----------

// "OODM" magic, u16 format version, provenance hash, kind tag, payload.
std::vector<std::uint8_t> serialize_monitor(const Monitor& m, std::uint64_t config_hash);
std::unique_ptr<Monitor> deserialize_monitor(const std::vector<std::uint8_t>& bytes,
                                             std::uint64_t* config_hash = nullptr);

void save_monitor(const Monitor& m, const std::string& path, std::uint64_t config_hash);
std::unique_ptr<Monitor> load_monitor(const std::string& path,
                                      std::uint64_t* config_hash = nullptr);

}  // namespace oodbench
