#include "xts/mixed.hpp"

#include <cmath>

#include "xts/compression.hpp"
#include "xts/errors.hpp"
#include "xts/half.hpp"

namespace xts {

SplitValue fp16_split(double x) {
  SplitValue s;
  s.half = round_to_half(x);
  s.residual = x - s.half;
  return s;
}

SplitValue fp16_split_stored(double x) {
  SplitValue s = fp16_split(x);
  // Residual magnitude is at most half an ulp of the payload, so shifting by
  // the 11-bit significand width brings it into comfortable binary16 range.
  // Underflow of the scaled residual is silent and leaves zero behind.
  s.residual = std::ldexp(round_to_half(std::ldexp(s.residual, 11)), -11);
  return s;
}

SplitMatrix split_matrix(const Matrix& m, bool stored_residual) {
  SplitMatrix out{Matrix(m.rows, m.cols), Matrix(m.rows, m.cols)};
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const SplitValue s =
        stored_residual ? fp16_split_stored(m.values[i]) : fp16_split(m.values[i]);
    out.half.values[i] = s.half;
    out.residual.values[i] = s.residual;
  }
  return out;
}

SplitTensor3 split_tensor(const Tensor3& t, bool stored_residual) {
  SplitTensor3 out{Tensor3(t.n1, t.n2, t.n3), Tensor3(t.n1, t.n2, t.n3)};
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    const SplitValue s =
        stored_residual ? fp16_split_stored(t.values[i]) : fp16_split(t.values[i]);
    out.half.values[i] = s.half;
    out.residual.values[i] = s.residual;
  }
  return out;
}

Matrix round_matrix_to_half(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    out.values[i] = round_to_half(m.values[i]);
  return out;
}

Tensor3 round_tensor_to_half(const Tensor3& t) {
  Tensor3 out(t.n1, t.n2, t.n3);
  for (std::size_t i = 0; i < t.values.size(); ++i)
    out.values[i] = round_to_half(t.values[i]);
  return out;
}

Matrix half_gemm(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw UsageError("half_gemm: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (index_t j = 0; j < b.cols; ++j) {
    const double* bc = b.col(j);
    double* oc = out.col(j);
    for (index_t i = 0; i < a.rows; ++i) {
      double acc = 0.0;
      for (index_t k = 0; k < a.cols; ++k) acc += a(i, k) * bc[k];
      oc[i] = acc;
    }
  }
  return out;
}

namespace {

void add_inplace(Tensor3& acc, const Tensor3& t) {
  for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += t.values[i];
}

Tensor3 comp_half(const Tensor3& t, const Matrix& u, const Matrix& v, const Matrix& w) {
  return comp_with(t, u, v, w, &half_gemm);
}

}  // namespace

Tensor3 comp_mixed(const SplitTensor3& t, const SplitMatrix& u, const SplitMatrix& v,
                   const SplitMatrix& w) {
  Tensor3 out = comp_half(t.half, u.half, v.half, w.half);
  add_inplace(out, comp_half(t.half, u.residual, v.half, w.half));
  add_inplace(out, comp_half(t.half, u.half, v.residual, w.half));
  add_inplace(out, comp_half(t.half, u.half, v.half, w.residual));
  add_inplace(out, comp_half(t.residual, u.half, v.half, w.half));
  return out;
}

Tensor3 comp_naive_half(const Tensor3& t, const Matrix& u, const Matrix& v,
                        const Matrix& w) {
  return comp_half(round_tensor_to_half(t), round_matrix_to_half(u),
                   round_matrix_to_half(v), round_matrix_to_half(w));
}

}  // namespace xts
