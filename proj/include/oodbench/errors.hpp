#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oodbench {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file (bad magic, truncated payload, ...).
struct FormatError : Error {
  using Error::Error;
};

// Out-of-range or inconsistent parameter value.
struct ParameterError : Error {
  using Error::Error;
};

// Tensor/layer shape mismatch; rejected input.
struct ShapeError : Error {
  using Error::Error;
};

// Provenance tags inconsistent with content (e.g. novelty on ID data).
struct IntegrityError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

// Non-finite loss during optimization; carries the epoch it appeared in.
struct TrainingDivergence : Error {
  std::size_t epoch;
  TrainingDivergence(std::size_t epoch_, const std::string& what_)
      : Error(what_), epoch(epoch_) {}
};

}  // namespace oodbench
