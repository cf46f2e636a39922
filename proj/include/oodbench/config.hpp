#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oodbench/faults.hpp"
#include "oodbench/monitors.hpp"
#include "oodbench/network.hpp"
#include "oodbench/training.hpp"

namespace oodbench {

struct DatasetConfig {
  std::string kind = "synthetic_shapes";  // or "idx" or "cifar10"
  // synthetic_shapes
  std::size_t num_classes = 10;
  std::size_t per_class = 500;
  std::size_t image_size = 16;
  std::uint64_t seed = 0;
  // idx
  std::string images_path;
  std::string labels_path;
  // cifar10
  std::vector<std::string> batches;
  // stratified split
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
};

// Layer sizes are given output-side only; input sizes follow from the
// running shape when the network is resolved.
struct LayerConfig {
  std::string type;  // "dense" | "conv" | "relu"
  std::size_t out = 0;                            // dense
  std::size_t out_ch = 0, kernel = 0, stride = 1;  // conv
};

struct ClassifierConfig {
  std::vector<LayerConfig> layers;
  std::vector<std::size_t> capture;  // layer indices whose output is recorded
  TrainConfig train;
};

struct OdinSettings {
  double temperature = 1000.0;
  double epsilon = 0.0014;
};

struct MonitorSettings {
  bool oob_enabled = false;
  OobConfig oob;
  bool odin_enabled = false;
  OdinSettings odin;
  bool recon_enabled = false;
  ReconConfig recon;

  std::vector<std::string> enabled() const;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string out_dir = "out";
  std::uint64_t stream_seed = 0;
  DatasetConfig dataset;
  ClassifierConfig classifier;
  MonitorSettings monitors;
  std::vector<FaultTemplate> faults;
  bool control = true;  // add the pure-ID benchmark
  std::uint64_t config_hash = 0;  // hash of the document bytes
};

// Parses the declarative experiment document (JSON). Unknown keys, wrong
// types, out-of-range values, duplicate fault tags, and missing referenced
// files all raise ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Replaces every seed in the config with one derived from the override.
void apply_seed_override(ExperimentConfig& cfg, std::uint64_t seed);

// Resolves output-sized layer configs into full layer specs against the
// dataset input shape.
std::vector<LayerSpec> resolve_layers(const std::vector<LayerConfig>& layers,
                                      const std::vector<std::size_t>& input_shape);

}  // namespace oodbench
