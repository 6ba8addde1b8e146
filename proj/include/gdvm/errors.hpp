#pragma once

#include <stdexcept>
#include <string>

namespace gdvm {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// exit codes: ConfigError -> 1, DataError/FormatError -> 2, NumericError -> 3.

// Invalid run configuration or invalid argument to a configurable operation.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Tensor/layer shape disagreement.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Math domain violation (e.g. log of a non-positive value).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// API contract violation (e.g. backward on a non-scalar loss).
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input data (labels out of range, count mismatches).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed file container (bad magic, truncated payload).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss during training; aborts the run with diagnostics.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint incompatible with the requested evaluation.
class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gdvm
