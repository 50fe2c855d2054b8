#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace xts {

/// Bad shapes, modes, or parameters; the caller violated a precondition.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed or non-finite data reached a numeric kernel.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Value outside the binary16 range under the active scaling policy.
class HalfRangeError : public std::runtime_error {
 public:
  explicit HalfRangeError(const std::string& what) : std::runtime_error(what) {}
};

/// A factor column with no usable pivot among the shared rows.
class DegenerateColumnError : public std::runtime_error {
 public:
  DegenerateColumnError(const std::string& what, std::int64_t column)
      : std::runtime_error(what), column(column) {}
  std::int64_t column;
};

/// Stacked system is unsolvable; carries the effective rank observed.
class IllPosedError : public std::runtime_error {
 public:
  IllPosedError(const std::string& what, std::int64_t effective_rank)
      : std::runtime_error(what), effective_rank(effective_rank) {}
  std::int64_t effective_rank;
};

/// Too few replicas survived decomposition to support recovery.
class InsufficientReplicasError : public std::runtime_error {
 public:
  InsufficientReplicasError(const std::string& what, std::int64_t survivors,
                            std::int64_t required)
      : std::runtime_error(what), survivors(survivors), required(required) {}
  std::int64_t survivors;
  std::int64_t required;
};

/// Wraps any stage failure inside the pipeline with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage(stage) {}
  std::string stage;
};

}  // namespace xts
