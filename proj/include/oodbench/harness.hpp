#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oodbench/datasets.hpp"
#include "oodbench/monitors.hpp"
#include "oodbench/network.hpp"

namespace oodbench {

// One processed stream instance. s_hat mirrors m_hat under the current
// reaction policy (an alarm invalidates the classification); the two are
// kept separate so other policies can diverge.
struct Readout {
  std::string instance_id;
  Origin origin = Origin::ID;
  std::string variation = "none";
  bool novelty = false;
  int y = 0;
  int y_hat = 0;
  double confidence = 0.0;
  bool m_hat = false;
  bool s_hat = false;
  double ml_time_s = 0.0;
  double sm_time_s = 0.0;
  double sut_time_s = 0.0;  // whole loop body; lives in memory, not in the CSV
};

// Streams the benchmark through classifier and monitor one instance at a
// time. The first instance is processed once extra as a discarded warm-up.
// Times come from a monotonic clock wrapped around exactly the forward call
// and exactly the detect call. Shape mismatches abort naming the instance.
std::vector<Readout> run_stream(const Network& net, const Monitor& monitor,
                                const BenchmarkDataset& bench);

// CSV with the exact column set above minus sut_time_s; booleans as 0/1,
// floats with 9 significant digits, provenance hash in a trailing comment.
void write_readout_csv(const std::string& path, const std::vector<Readout>& rows,
                       std::uint64_t config_hash);
std::vector<Readout> read_readout_csv(const std::string& path,
                                      std::uint64_t* config_hash = nullptr);

struct TimeStats {
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
};

struct ResourceReport {
  TimeStats ml_time_s;
  TimeStats sm_time_s;
  TimeStats sut_time_s;
  std::uint64_t ml_bytes = 0;   // serialized classifier size
  std::uint64_t sm_bytes = 0;   // serialized monitor size
  double sm_share = 0.0;        // sm mean over sut mean
};

// Aggregates per-instance times (mean, p50, p95 by nearest rank) and takes
// artifact sizes from the serialized forms.
ResourceReport measure_resources(const Network& net, const Monitor& monitor,
                                 const std::vector<Readout>& readouts);

std::string resource_report_json(const ResourceReport& r);
ResourceReport parse_resource_report(const std::string& text);

}  // namespace oodbench
