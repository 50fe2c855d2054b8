#pragma once

#include <cstdint>
#include <vector>

namespace xts {

using index_t = std::int64_t;

/// Column-major dense matrix; entry (i, j) lives at values[i + rows*j].
struct Matrix {
  index_t rows = 0;
  index_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(index_t r, index_t c);

  double& operator()(index_t i, index_t j) { return values[i + rows * j]; }
  double operator()(index_t i, index_t j) const { return values[i + rows * j]; }

  double* col(index_t j) { return values.data() + rows * j; }
  const double* col(index_t j) const { return values.data() + rows * j; }

  index_t size() const { return rows * cols; }

  static Matrix identity(index_t n);
};

/// Dense third-order tensor, column-major: (i, j, k) at i + n1*j + n1*n2*k.
struct Tensor3 {
  index_t n1 = 0;
  index_t n2 = 0;
  index_t n3 = 0;
  std::vector<double> values;

  Tensor3() = default;
  Tensor3(index_t d1, index_t d2, index_t d3);

  double& operator()(index_t i, index_t j, index_t k) {
    return values[i + n1 * (j + n2 * k)];
  }
  double operator()(index_t i, index_t j, index_t k) const {
    return values[i + n1 * (j + n2 * k)];
  }

  index_t size() const { return n1 * n2 * n3; }
};

/// The mode matrices of a rank-R CP model: a is I×R, b is J×R, c is K×R.
struct FactorTriple {
  Matrix a, b, c;

  FactorTriple() = default;
  FactorTriple(Matrix a_, Matrix b_, Matrix c_);

  index_t rank() const { return a.cols; }
};

/// Mode-n unfolding. Mode 1 gives I×(J·K) with (i, j + J·k) = t(i,j,k);
/// mode 2 gives J×(I·K) with (j, i + I·k); mode 3 gives K×(I·J) with
/// (k, i + I·j). Mode 1 is a relabeling of the stored buffer.
Matrix matricize(const Tensor3& t, int mode);

/// Inverse of matricize for the given mode and target dims.
Tensor3 fold(const Matrix& m, int mode, index_t n1, index_t n2, index_t n3);

/// Column-wise Kronecker product: column r is kron(a col r, b col r),
/// i.e. row (ia*b.rows + ib) holds a(ia,r)*b(ib,r).
Matrix khatri_rao(const Matrix& a, const Matrix& b);

/// Full matrix Kronecker product, (a.rows*b.rows)×(a.cols*b.cols).
Matrix kron(const Matrix& a, const Matrix& b);

/// Elementwise product of same-shape matrices.
Matrix hadamard(const Matrix& a, const Matrix& b);

/// Rank-1 tensor u ∘ v ∘ w.
Tensor3 outer3(const std::vector<double>& u, const std::vector<double>& v,
               const std::vector<double>& w);

/// t(i,j,k) = sum_r a(i,r) b(j,r) c(k,r). Requires rank >= 1.
Tensor3 reconstruct(const FactorTriple& f);

/// Mean squared error over all entries; dims must match.
double mse(const Tensor3& x, const Tensor3& y);

double frobenius_norm(const Matrix& m);
double frobenius_norm(const Tensor3& t);

bool all_finite(const Matrix& m);
bool all_finite(const Tensor3& t);

}  // namespace xts
