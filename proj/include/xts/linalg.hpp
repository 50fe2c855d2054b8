#pragma once

#include "xts/tensor.hpp"

namespace xts {

/// C = op(A) * op(B) with optional transposes.
Matrix gemm(const Matrix& a, const Matrix& b, bool transpose_a = false,
            bool transpose_b = false);

Matrix transpose(const Matrix& m);

/// Moore-Penrose pseudo-inverse via SVD; singular values below
/// rcond * sigma_max are treated as zero.
Matrix pseudo_inverse(const Matrix& m, double rcond = 1e-12);

/// Least-squares solution of a*x = rhs through a column-pivoted QR.
/// Requires a.rows >= a.cols and full column rank; throws IllPosedError
/// (with the effective rank) otherwise.
Matrix solve_least_squares(const Matrix& a, const Matrix& rhs);

/// First `count` left singular vectors of m, via the eigendecomposition of
/// m * m^T. Requires count <= m.rows.
Matrix leading_left_singular_vectors(const Matrix& m, index_t count);

}  // namespace xts
