#pragma once

#include "xts/tensor.hpp"

namespace xts {

/// Half-precision payload plus the conversion residual. With full-precision
/// residual storage half + residual == original exactly; with compact storage
/// the residual is itself a binary16 scaled by 2^11 before rounding, unwound
/// back on the way out.
struct SplitValue {
  double half = 0.0;
  double residual = 0.0;
};

SplitValue fp16_split(double x);
SplitValue fp16_split_stored(double x);

struct SplitMatrix {
  Matrix half;
  Matrix residual;
};

struct SplitTensor3 {
  Tensor3 half;
  Tensor3 residual;
};

SplitMatrix split_matrix(const Matrix& m, bool stored_residual = false);
SplitTensor3 split_tensor(const Tensor3& t, bool stored_residual = false);

/// Every entry rounded to binary16.
Matrix round_matrix_to_half(const Matrix& m);
Tensor3 round_tensor_to_half(const Tensor3& t);

/// Product of binary16-valued operands accumulated in double precision with a
/// fixed k-inner loop order; the software stand-in for a tensor-core GEMM.
Matrix half_gemm(const Matrix& a, const Matrix& b);

/// First-order residual-compensated compression: the half×half×half×half term
/// plus the four single-residual cross terms, all evaluated through half_gemm
/// mode products. Higher-order residual terms are dropped.
Tensor3 comp_mixed(const SplitTensor3& t, const SplitMatrix& u, const SplitMatrix& v,
                   const SplitMatrix& w);

/// Baseline with no compensation: all operands rounded to binary16,
/// accumulation in double. Exists to quantify what comp_mixed buys.
Tensor3 comp_naive_half(const Tensor3& t, const Matrix& u, const Matrix& v,
                        const Matrix& w);

}  // namespace xts
