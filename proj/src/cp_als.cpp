#include "xts/cp_als.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xts/errors.hpp"
#include "xts/linalg.hpp"
#include "xts/rng.hpp"

namespace xts {

namespace {

Matrix gaussian_matrix(index_t rows, index_t cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  Rng rng(seed);
  for (double& v : m.values) v = rng.normal();
  return m;
}

// ||x1 - a * kr'||_F computed against the mode-1 unfolding.
double residual_norm(const Matrix& x1, const Matrix& a, const Matrix& kr) {
  Matrix approx = gemm(a, kr, false, true);
  double acc = 0.0;
  for (std::size_t i = 0; i < approx.values.size(); ++i) {
    const double d = x1.values[i] - approx.values[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

Matrix gram(const Matrix& m) { return gemm(m, m, true, false); }

}  // namespace

double relative_error(const Tensor3& t, const FactorTriple& f) {
  if (f.a.rows != t.n1 || f.b.rows != t.n2 || f.c.rows != t.n3)
    throw UsageError("relative_error: factor/tensor dimension mismatch");
  const Matrix x1 = matricize(t, 1);
  const double res = residual_norm(x1, f.a, khatri_rao(f.c, f.b));
  const double tn = frobenius_norm(t);
  return tn > 0.0 ? res / tn : res;
}

AlsResult cp_als(const Tensor3& t, const AlsConfig& cfg) {
  const index_t r = cfg.rank;
  if (r < 1) throw UsageError("cp_als: rank must be >= 1");
  if (cfg.max_iters < 1) throw UsageError("cp_als: max_iters must be >= 1");
  if (!(cfg.tol > 0.0)) throw UsageError("cp_als: tol must be positive");
  const index_t cap = std::min({t.n2 * t.n3, t.n1 * t.n3, t.n1 * t.n2});
  if (r > cap)
    throw UsageError("cp_als: rank " + std::to_string(r) +
                     " exceeds the identifiable bound " + std::to_string(cap));
  if (!all_finite(t)) throw DataError("cp_als: input tensor has non-finite values");

  const Matrix x1 = matricize(t, 1);
  const Matrix x2 = matricize(t, 2);
  const Matrix x3 = matricize(t, 3);
  const double tn = frobenius_norm(t);

  auto init_mode = [&](const Matrix& unfolding, index_t rows, std::uint64_t tag) {
    if (cfg.init == AlsConfig::Init::normal || tn == 0.0)
      return gaussian_matrix(rows, r, Rng::derive(cfg.seed, tag));
    const index_t lead = std::min(r, rows);
    Matrix m = gaussian_matrix(rows, r, Rng::derive(cfg.seed, tag));
    const Matrix vecs = leading_left_singular_vectors(unfolding, lead);
    for (index_t j = 0; j < lead; ++j)
      for (index_t i = 0; i < rows; ++i) m(i, j) = vecs(i, j);
    return m;
  };

  AlsResult out;
  Matrix a = init_mode(x1, t.n1, 1);
  Matrix b = init_mode(x2, t.n2, 2);
  Matrix c = init_mode(x3, t.n3, 3);

  for (index_t it = 0; it < cfg.max_iters; ++it) {
    a = gemm(gemm(x1, khatri_rao(c, b)), pseudo_inverse(hadamard(gram(c), gram(b))));
    b = gemm(gemm(x2, khatri_rao(c, a)), pseudo_inverse(hadamard(gram(c), gram(a))));
    c = gemm(gemm(x3, khatri_rao(b, a)), pseudo_inverse(hadamard(gram(b), gram(a))));

    // Absorb a/b column norms into c to keep scales from drifting.
    for (index_t col = 0; col < r; ++col) {
      double na = 0.0, nb = 0.0;
      for (index_t i = 0; i < a.rows; ++i) na += a(i, col) * a(i, col);
      for (index_t i = 0; i < b.rows; ++i) nb += b(i, col) * b(i, col);
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      if (na > 0.0)
        for (index_t i = 0; i < a.rows; ++i) a(i, col) /= na;
      if (nb > 0.0)
        for (index_t i = 0; i < b.rows; ++i) b(i, col) /= nb;
      const double s = na * nb;
      for (index_t i = 0; i < c.rows; ++i) c(i, col) *= s;
    }

    const double res = residual_norm(x1, a, khatri_rao(c, b));
    const double err = tn > 0.0 ? res / tn : res;
    out.error_history.push_back(err);
    const std::size_t n = out.error_history.size();
    if (n >= 2 && std::fabs(out.error_history[n - 2] - err) < cfg.tol) {
      out.converged = true;
      break;
    }
  }

  out.iters = static_cast<index_t>(out.error_history.size());
  out.factors = FactorTriple(std::move(a), std::move(b), std::move(c));
  return out;
}

}  // namespace xts
