#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace xts {

struct StageRecord {
  std::string stage;
  double elapsed_s = 0.0;
  std::string status = "ok";  // ok | error | skipped
  std::string error;          // set when status == error
};

struct RunMetrics {
  std::vector<StageRecord> stages;
  std::int64_t replicas_total = 0;
  std::int64_t replicas_dropped = 0;
  std::array<double, 3> factor_rel_err{-1.0, -1.0, -1.0};
  double sample_mse = -1.0;  // reconstruction MSE on the held-out sample block
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string config_echo;
  std::vector<std::string> warnings;
};

/// One JSON object per stage plus a trailing summary object, newline-separated.
std::string metrics_to_jsonl(const RunMetrics& m);

/// Appends metrics_to_jsonl(m) to the file at path.
void append_metrics_jsonl(const RunMetrics& m, const std::string& path);

/// FNV-1a over the canonical config string, hex-encoded.
std::string fnv1a_hex(const std::string& text);

}  // namespace xts
