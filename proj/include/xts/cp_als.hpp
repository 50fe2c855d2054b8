#pragma once

#include <cstdint>
#include <vector>

#include "xts/tensor.hpp"

namespace xts {

struct AlsConfig {
  index_t rank = 1;
  index_t max_iters = 500;
  double tol = 1e-10;  // stop when the relative-fit change per sweep drops below
  std::uint64_t seed = 0;

  /// normal: i.i.d. N(0,1) entries. nvecs: leading eigenvectors of the
  /// unfolding Grams, padded with normal columns past each unfolding's rank;
  /// far more reliable on exactly low-rank tensors where random starts swamp.
  enum class Init { normal, nvecs } init = Init::normal;
};

struct AlsResult {
  FactorTriple factors;
  index_t iters = 0;
  std::vector<double> error_history;  // relative reconstruction error per sweep
  bool converged = false;

  double final_error() const {
    return error_history.empty() ? 1.0 : error_history.back();
  }
};

/// ||t - reconstruct(f)||_F / ||t||_F, or ||reconstruct(f)||_F when t is zero.
double relative_error(const Tensor3& t, const FactorTriple& f);

/// Alternating least squares CP decomposition. Each sweep solves the three
/// exact least-squares subproblems through Gram pseudo-inverses and then
/// renormalizes the a/b columns into c. Non-convergence within max_iters is
/// reported through the flag, not an error.
AlsResult cp_als(const Tensor3& t, const AlsConfig& cfg);

}  // namespace xts
