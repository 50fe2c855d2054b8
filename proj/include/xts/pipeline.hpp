#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "xts/compression.hpp"
#include "xts/metrics.hpp"
#include "xts/tensor.hpp"

namespace xts {

inline constexpr std::uint64_t kDefaultMemoryBudget = 512ull << 20;

struct PipelineConfig {
  std::array<index_t, 3> dims{};
  std::array<index_t, 3> reduced{};
  index_t rank = 1;

  index_t replicas = 0;  // 0 -> compute_replica_count(dims, reduced, slack)
  index_t slack = 10;
  index_t shared = 0;                    // 0 -> 2 * rank (clamped to reduced dims)
  std::array<index_t, 3> block{0, 0, 0};  // 0 -> whole extent

  enum class Mode { dense, sparse, two_stage } mode = Mode::dense;
  double alpha = 1.6, beta = 1.6, gamma = 1.6;  // two-stage inflation ratios
  double projection_s = 0.0;  // sparse-projection s; 0 -> min(dims/reduced)

  index_t omp_sparsity = 0;  // required for sparse and two_stage modes
  double omp_residual_tol = 1e-9;

  index_t sample_b = 0;  // sampled-block rows per mode; 0 -> max(2*rank, 8)

  enum class Precision { full, mixed } precision = Precision::full;
  bool deterministic = false;
  std::uint64_t seed = 0;

  index_t als_max_iters = 500;
  double als_tol = 1e-10;
  double replica_fit_tol = 1e-6;  // replicas fitting worse than this are dropped
  index_t als_restarts = 3;       // fresh inits tried per replica before dropping

  int workers = 0;  // 0 -> hardware concurrency; XTS_THREADS caps either way
};

struct SyntheticSpec {
  std::array<index_t, 3> dims{};
  index_t rank = 1;
  enum class Law { dense, sparse } law = Law::dense;
  index_t nnz_per_col = 0;  // sparse law; 0 -> max(1, dim/100) per mode
  std::uint64_t seed = 0;
};

struct Synthetic {
  FactorTriple factors;
  std::optional<Tensor3> tensor;
};

/// Seed-deterministic synthetic problem. Materialization is refused (with
/// guidance to stay factored) when the tensor would exceed the byte budget.
Synthetic generate(const SyntheticSpec& spec, bool materialize = true,
                   std::uint64_t memory_budget_bytes = kDefaultMemoryBudget);

/// Either a materialized tensor or a factor triple standing in for a tensor
/// too large to hold; borrows both, caller keeps them alive.
struct TensorSource {
  const Tensor3* tensor = nullptr;
  const FactorTriple* factors = nullptr;

  static TensorSource from_tensor(const Tensor3& t) { return {&t, nullptr}; }
  static TensorSource from_factors(const FactorTriple& f) { return {nullptr, &f}; }

  std::array<index_t, 3> dims() const;
};

/// Runs the full scheme: ensemble generation and (blocked) compression,
/// per-replica ALS with drop-out, anchor alignment, stacked least squares,
/// sampled-block permutation/scale recovery and, for the sparse modes, greedy
/// sparse recovery. Metrics are filled in even when a stage fails; failures
/// surface as StageError (or UsageError for bad configs).
FactorTriple decompose(const TensorSource& source, const PipelineConfig& cfg,
                       RunMetrics& metrics);

struct EvalReport {
  std::array<double, 3> mode_rel_err{-1.0, -1.0, -1.0};
  double sample_mse = 0.0;
  index_t sample_size = 0;
  FactorTriple aligned;  // recovered factors after ambiguity resolution
};

/// Resolves the residual column permutation/scaling ambiguity against the
/// truth factors, then reports per-mode relative errors and the MSE of the
/// reconstructed leading corner. sample == 0 picks max(2*rank, 8).
EvalReport evaluate(const FactorTriple& truth, const FactorTriple& recovered,
                    index_t sample = 0);

/// Truth given as a tensor: corner MSE only.
EvalReport evaluate(const Tensor3& truth, const FactorTriple& recovered,
                    index_t sample = 0);

/// Canonical config string used for echoing and hashing.
std::string config_to_string(const PipelineConfig& cfg);

}  // namespace xts
