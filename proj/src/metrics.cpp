#include "xts/metrics.hpp"

#include <fstream>

#include <json.hpp>

#include "xts/errors.hpp"

namespace xts {

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

json base_record(const RunMetrics& m, const std::string& stage) {
  return json{{"schema", kSchemaVersion},
              {"stage", stage},
              {"seed", m.seed},
              {"config_hash", m.config_hash}};
}

}  // namespace

std::string metrics_to_jsonl(const RunMetrics& m) {
  std::string out;
  for (const StageRecord& rec : m.stages) {
    json j = base_record(m, rec.stage);
    j["elapsed_s"] = rec.elapsed_s;
    j["status"] = rec.status;
    if (!rec.error.empty()) j["error"] = rec.error;
    out += j.dump();
    out += '\n';
  }
  json summary = base_record(m, "summary");
  summary["replicas_total"] = m.replicas_total;
  summary["replicas_dropped"] = m.replicas_dropped;
  if (m.factor_rel_err[0] >= 0.0)
    summary["factor_rel_err"] = m.factor_rel_err;
  if (m.sample_mse >= 0.0) summary["sample_mse"] = m.sample_mse;
  summary["config"] = m.config_echo;
  if (!m.warnings.empty()) summary["warnings"] = m.warnings;
  out += summary.dump();
  out += '\n';
  return out;
}

void append_metrics_jsonl(const RunMetrics& m, const std::string& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot open metrics file: " + path);
  out << metrics_to_jsonl(m);
  if (!out) throw DataError("metrics write failed: " + path);
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

}  // namespace xts
