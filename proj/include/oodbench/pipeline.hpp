#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "oodbench/config.hpp"
#include "oodbench/network.hpp"

namespace oodbench {

// Output tree of one experiment. Fixed layout keyed off the config's
// out_dir so every stage finds the previous stage's artifacts.
struct Paths {
  std::string out_dir;
  std::string data_dir;        // persisted train/holdout splits
  std::string benchmarks_dir;  // assembled streams + manifests
  std::string monitors_dir;
  std::string readouts_dir;
  std::string report_dir;
  std::string train_set;
  std::string holdout_set;
  std::string model;
  std::string report_json;
  std::string report_txt;
  std::string cd_svg;
  std::string cd_txt;

  std::string benchmark(const std::string& name) const;
  std::string manifest(const std::string& name) const;
  std::string monitor(const std::string& kind) const;
  std::string readout(const std::string& bench, const std::string& kind) const;
  std::string resources(const std::string& bench, const std::string& kind) const;
};

Paths make_paths(const std::string& out_dir);

// Input image shape of the configured dataset kind.
std::vector<std::size_t> dataset_input_shape(const DatasetConfig& dc);

// Loads the classifier checkpoint when present, otherwise trains it from
// the persisted training split and saves it. Deterministic per config.
Network ensure_model(const ExperimentConfig& cfg);

// Pipeline stages. Each reads its inputs from the out_dir tree written by
// the previous stage and throws on failure (ConfigError for bad setups,
// DataError and friends for bad artifacts).
void cmd_generate(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_run(const ExperimentConfig& cfg, std::size_t workers = 1,
             std::vector<std::string> only_monitors = {});
void cmd_eval(const ExperimentConfig& cfg);
void cmd_report(const ExperimentConfig& cfg, std::ostream& os);

// Command-line entry: parses argv, dispatches, maps exceptions to exit
// codes (0 ok, 2 config error, 3 data/runtime error).
int run_cli(int argc, const char* const* argv);

}  // namespace oodbench
