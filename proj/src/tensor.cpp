#include "xts/tensor.hpp"

#include <cmath>
#include <string>

#include "xts/errors.hpp"

namespace xts {

Matrix::Matrix(index_t r, index_t c) : rows(r), cols(c) {
  if (r < 0 || c < 0) throw UsageError("Matrix: negative dimension");
  values.assign(static_cast<std::size_t>(r * c), 0.0);
}

Matrix Matrix::identity(index_t n) {
  Matrix m(n, n);
  for (index_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Tensor3::Tensor3(index_t d1, index_t d2, index_t d3) : n1(d1), n2(d2), n3(d3) {
  if (d1 < 0 || d2 < 0 || d3 < 0) throw UsageError("Tensor3: negative dimension");
  values.assign(static_cast<std::size_t>(d1 * d2 * d3), 0.0);
}

FactorTriple::FactorTriple(Matrix a_, Matrix b_, Matrix c_)
    : a(std::move(a_)), b(std::move(b_)), c(std::move(c_)) {
  if (a.cols != b.cols || a.cols != c.cols)
    throw UsageError("FactorTriple: mode matrices must share column count");
}

Matrix matricize(const Tensor3& t, int mode) {
  switch (mode) {
    case 1: {
      Matrix m(t.n1, t.n2 * t.n3);
      m.values = t.values;  // same layout, relabeled
      return m;
    }
    case 2: {
      Matrix m(t.n2, t.n1 * t.n3);
      for (index_t k = 0; k < t.n3; ++k)
        for (index_t j = 0; j < t.n2; ++j)
          for (index_t i = 0; i < t.n1; ++i) m(j, i + t.n1 * k) = t(i, j, k);
      return m;
    }
    case 3: {
      Matrix m(t.n3, t.n1 * t.n2);
      for (index_t k = 0; k < t.n3; ++k)
        for (index_t j = 0; j < t.n2; ++j)
          for (index_t i = 0; i < t.n1; ++i) m(k, i + t.n1 * j) = t(i, j, k);
      return m;
    }
    default:
      throw UsageError("matricize: mode must be 1, 2 or 3");
  }
}

Tensor3 fold(const Matrix& m, int mode, index_t n1, index_t n2, index_t n3) {
  Tensor3 t(n1, n2, n3);
  switch (mode) {
    case 1:
      if (m.rows != n1 || m.cols != n2 * n3)
        throw UsageError("fold: mode-1 shape mismatch");
      t.values = m.values;
      return t;
    case 2:
      if (m.rows != n2 || m.cols != n1 * n3)
        throw UsageError("fold: mode-2 shape mismatch");
      for (index_t k = 0; k < n3; ++k)
        for (index_t j = 0; j < n2; ++j)
          for (index_t i = 0; i < n1; ++i) t(i, j, k) = m(j, i + n1 * k);
      return t;
    case 3:
      if (m.rows != n3 || m.cols != n1 * n2)
        throw UsageError("fold: mode-3 shape mismatch");
      for (index_t k = 0; k < n3; ++k)
        for (index_t j = 0; j < n2; ++j)
          for (index_t i = 0; i < n1; ++i) t(i, j, k) = m(k, i + n1 * j);
      return t;
    default:
      throw UsageError("fold: mode must be 1, 2 or 3");
  }
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw UsageError("khatri_rao: column counts differ (" +
                     std::to_string(a.cols) + " vs " + std::to_string(b.cols) + ")");
  Matrix m(a.rows * b.rows, a.cols);
  for (index_t r = 0; r < a.cols; ++r) {
    double* out = m.col(r);
    const double* ca = a.col(r);
    const double* cb = b.col(r);
    for (index_t ia = 0; ia < a.rows; ++ia)
      for (index_t ib = 0; ib < b.rows; ++ib) out[ia * b.rows + ib] = ca[ia] * cb[ib];
  }
  return m;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix m(a.rows * b.rows, a.cols * b.cols);
  for (index_t ja = 0; ja < a.cols; ++ja)
    for (index_t jb = 0; jb < b.cols; ++jb) {
      double* out = m.col(ja * b.cols + jb);
      for (index_t ia = 0; ia < a.rows; ++ia) {
        const double s = a(ia, ja);
        const double* cb = b.col(jb);
        for (index_t ib = 0; ib < b.rows; ++ib) out[ia * b.rows + ib] = s * cb[ib];
      }
    }
  return m;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw UsageError("hadamard: shape mismatch");
  Matrix m(a.rows, a.cols);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = a.values[i] * b.values[i];
  return m;
}

Tensor3 outer3(const std::vector<double>& u, const std::vector<double>& v,
               const std::vector<double>& w) {
  Tensor3 t(static_cast<index_t>(u.size()), static_cast<index_t>(v.size()),
            static_cast<index_t>(w.size()));
  for (index_t k = 0; k < t.n3; ++k)
    for (index_t j = 0; j < t.n2; ++j)
      for (index_t i = 0; i < t.n1; ++i) t(i, j, k) = u[i] * v[j] * w[k];
  return t;
}

Tensor3 reconstruct(const FactorTriple& f) {
  if (f.rank() < 1) throw UsageError("reconstruct: rank must be >= 1");
  if (f.b.cols != f.rank() || f.c.cols != f.rank())
    throw UsageError("reconstruct: factor column counts differ");
  Tensor3 t(f.a.rows, f.b.rows, f.c.rows);
  for (index_t r = 0; r < f.rank(); ++r) {
    const double* ca = f.a.col(r);
    const double* cb = f.b.col(r);
    const double* cc = f.c.col(r);
    for (index_t k = 0; k < t.n3; ++k)
      for (index_t j = 0; j < t.n2; ++j) {
        const double s = cb[j] * cc[k];
        double* slab = t.values.data() + t.n1 * (j + t.n2 * k);
        for (index_t i = 0; i < t.n1; ++i) slab[i] += ca[i] * s;
      }
  }
  return t;
}

double mse(const Tensor3& x, const Tensor3& y) {
  if (x.n1 != y.n1 || x.n2 != y.n2 || x.n3 != y.n3)
    throw UsageError("mse: dimension mismatch");
  if (x.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    const double d = x.values[i] - y.values[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

double frobenius_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.values) acc += v * v;
  return std::sqrt(acc);
}

double frobenius_norm(const Tensor3& t) {
  double acc = 0.0;
  for (double v : t.values) acc += v * v;
  return std::sqrt(acc);
}

bool all_finite(const Matrix& m) {
  for (double v : m.values)
    if (!std::isfinite(v)) return false;
  return true;
}

bool all_finite(const Tensor3& t) {
  for (double v : t.values)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace xts
