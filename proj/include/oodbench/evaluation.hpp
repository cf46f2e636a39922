#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oodbench/datasets.hpp"
#include "oodbench/harness.hpp"

namespace oodbench {

enum class Verdict : std::uint8_t { TP = 0, FP = 1, TN = 2, FN = 3 };

const char* verdict_str(Verdict v);

// The detector is judged twice per instance: did it flag what it should
// (specific), and did its intervention help the system output (overall).
struct VerdictPair {
  Verdict specific;
  Verdict overall;
};

// Decision table over (origin, novelty, flag raised, classifier correct).
// Novel-class instances have no meaningful classifier verdict, so their
// overall outcome follows the flag alone. Novelty on ID data is malformed.
VerdictPair oracle(Origin origin, bool novelty, bool m_hat, bool ml_correct);

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  void add(Verdict v);
};

struct VerdictCounts {
  ConfusionCounts specific;
  ConfusionCounts overall;
};

VerdictCounts count_verdicts(const std::vector<Readout>& rows);

// Matthews correlation; any zero factor in the denominator yields 0.
double mcc(const ConfusionCounts& c);

struct RateSet {
  double fpr = 0.0;
  double fnr = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double micro_f1 = 0.0;
};

// All rates use the 0/0 = 0 convention.
RateSet rates(const ConfusionCounts& c);

// System-level accuracy impact. Each instance expands one-vs-rest over the
// K known classes: an emitted correct prediction counts TP once and TN for
// the other classes, an emitted wrong one FP+FN+TN for the rest, and a
// canceled one FN plus TN for the rest. The baseline ignores cancellation.
struct ImpactResult {
  double mcc_sut = 0.0;
  double mcc_ml = 0.0;
  double relative_change = 0.0;
  bool change_defined = true;  // false when mcc_ml = 0 with differing mcc_sut
};

ImpactResult overall_impact(const std::vector<Readout>& with_sm,
                            const std::vector<Readout>& ml_only);

// Metrics of one readout file: detection confusion both ways plus impact
// (baseline = same stream with every cancellation ignored).
struct BenchmarkMetrics {
  std::string benchmark;
  std::string monitor;
  ConfusionCounts specific;
  ConfusionCounts overall;
  double mcc_specific = 0.0;
  double mcc_overall = 0.0;
  RateSet rates_specific;
  RateSet rates_overall;
  ImpactResult impact;
};

BenchmarkMetrics evaluate_readouts(const std::string& benchmark, const std::string& monitor,
                                   const std::vector<Readout>& rows);

// Methods ranked per benchmark by value, rank 1 = largest, ties averaged.
struct RankMatrix {
  std::vector<std::string> methods;                // k
  std::vector<std::string> benchmarks;             // N
  std::vector<std::vector<double>> values;         // N x k
  std::vector<std::vector<double>> ranks;          // N x k
  std::vector<double> mean_ranks;                  // k
};

RankMatrix make_ranks(std::vector<std::string> methods, std::vector<std::string> benchmarks,
                      std::vector<std::vector<double>> values);

struct FriedmanResult {
  double chi2 = 0.0;
  std::size_t df = 0;
  double p = 1.0;
};

// Friedman statistic over mean ranks with a chi-square tail p-value.
FriedmanResult friedman(const RankMatrix& rm);

// Nemenyi critical difference at 95% confidence; the studentized-range
// constants for k in [2,10] are embedded, other alphas are rejected.
double nemenyi_cd(std::size_t k, std::size_t n_benchmarks, double alpha = 0.05);

struct CdDiagram {
  std::string svg;
  std::string txt;
  std::vector<std::vector<std::size_t>> groups;  // maximal sets within the CD
};

// Critical-difference diagram: a rank axis with one stem per method and
// bars joining maximal groups whose extreme mean ranks differ by less
// than cd. Output depends only on the inputs.
CdDiagram cd_diagram(const RankMatrix& rm, double cd);

}  // namespace oodbench
