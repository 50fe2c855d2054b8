#pragma once

#include <vector>

#include "xts/tensor.hpp"

namespace xts {

/// Column permutation plus diagonal scaling relating two factor matrices:
/// apply_forward(m, ps) column r is m column perm[r] times scale[r].
struct PermScale {
  std::vector<index_t> perm;
  std::vector<double> scale;

  static PermScale identity(index_t rank);
  PermScale inverse() const;
};

struct OmpConfig {
  index_t sparsity = 1;       // max selected atoms per column
  double residual_tol = 1e-9; // stop early once the residual norm drops below
};

struct NormalizeResult {
  Matrix normalized;
  std::vector<double> pivots;
};

/// Divides each column by its pivot: the entry of largest magnitude among the
/// first shared_rows rows, sign preserved. A column that is all zero there has
/// no usable pivot and raises DegenerateColumnError.
NormalizeResult normalize_shared(const Matrix& m, index_t shared_rows);

/// Exact linear assignment maximizing sum_r objective(r, perm[r]); O(R^3).
/// Ties resolve to the lowest-index assignment.
std::vector<index_t> max_trace_assignment(const Matrix& objective);

/// Permutation maximizing the summed inner products of ref columns with the
/// matched target columns.
std::vector<index_t> hungarian_match(const Matrix& ref_block,
                                     const Matrix& target_block);

struct AlignResult {
  std::vector<FactorTriple> aligned;  // one entry per surviving replica
  std::vector<bool> dropped;          // indexed by input replica
  std::vector<index_t> survivors;     // input indices of the aligned entries
};

/// Pivot-normalizes every mode of every replica over the shared anchor rows,
/// then permutes each replica's columns (all three modes together) so its
/// anchor block best matches the first surviving replica. Replicas with a
/// degenerate column are dropped; fewer than min_survivors left is an error.
AlignResult align_replicas(const std::vector<FactorTriple>& factors,
                           index_t shared_rows, index_t min_survivors = 1);

/// Least-squares solve of the stacked system [f_1; ...; f_P] = [u_1; ...; u_P] * x
/// through an orthogonal factorization. Requires an overdetermined or square
/// full-rank stack.
Matrix solve_stacked_ls(const std::vector<Matrix>& stacked_factors,
                        const std::vector<Matrix>& stacked_compressors);

/// Finds the PermScale taking global_head to sampled_factors, i.e.
/// sampled ~= apply_forward(global_head, ps): the permutation comes from
/// matching the sign-pivot-normalized blocks, the scales from pivot ratios.
PermScale recover_perm_scale(const Matrix& global_head, const Matrix& sampled_factors);

Matrix apply_forward(const Matrix& m, const PermScale& ps);

/// m * inverse(scale) * perm^T: undoes apply_forward.
Matrix apply_recovery(const Matrix& m, const PermScale& ps);

/// Column-wise orthogonal matching pursuit: greedily selects the atom with
/// the largest normalized correlation against the residual and re-solves the
/// active-set least squares through a growing Cholesky factor. Stops at the
/// sparsity budget or once the residual is below residual_tol.
Matrix omp_recover(const Matrix& measured, const Matrix& dictionary,
                   const OmpConfig& cfg);

}  // namespace xts
