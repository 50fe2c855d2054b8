#include "xts/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "xts/errors.hpp"
#include "xts/linalg.hpp"

namespace xts {

namespace {

Matrix head_rows(const Matrix& m, index_t count) {
  Matrix out(count, m.cols);
  for (index_t j = 0; j < m.cols; ++j)
    for (index_t i = 0; i < count; ++i) out(i, j) = m(i, j);
  return out;
}

Matrix permute_columns(const Matrix& m, const std::vector<index_t>& perm) {
  Matrix out(m.rows, m.cols);
  for (index_t r = 0; r < m.cols; ++r)
    for (index_t i = 0; i < m.rows; ++i) out(i, r) = m(i, perm[static_cast<std::size_t>(r)]);
  return out;
}

void check_perm_scale(const PermScale& ps) {
  const index_t r = static_cast<index_t>(ps.perm.size());
  if (ps.scale.size() != ps.perm.size())
    throw UsageError("PermScale: perm and scale lengths differ");
  std::vector<bool> hit(static_cast<std::size_t>(r), false);
  for (index_t p : ps.perm) {
    if (p < 0 || p >= r || hit[static_cast<std::size_t>(p)])
      throw UsageError("PermScale: perm is not a bijection");
    hit[static_cast<std::size_t>(p)] = true;
  }
  for (double s : ps.scale)
    if (s == 0.0 || !std::isfinite(s))
      throw UsageError("PermScale: scale entries must be nonzero and finite");
}

}  // namespace

PermScale PermScale::identity(index_t rank) {
  PermScale ps;
  ps.perm.resize(static_cast<std::size_t>(rank));
  ps.scale.assign(static_cast<std::size_t>(rank), 1.0);
  for (index_t r = 0; r < rank; ++r) ps.perm[static_cast<std::size_t>(r)] = r;
  return ps;
}

PermScale PermScale::inverse() const {
  check_perm_scale(*this);
  PermScale inv;
  inv.perm.resize(perm.size());
  inv.scale.resize(scale.size());
  for (std::size_t r = 0; r < perm.size(); ++r) {
    inv.perm[static_cast<std::size_t>(perm[r])] = static_cast<index_t>(r);
    inv.scale[static_cast<std::size_t>(perm[r])] = 1.0 / scale[r];
  }
  return inv;
}

NormalizeResult normalize_shared(const Matrix& m, index_t shared_rows) {
  if (shared_rows < 1 || shared_rows > m.rows)
    throw UsageError("normalize_shared: shared row count out of range");
  NormalizeResult out;
  out.normalized = m;
  out.pivots.resize(static_cast<std::size_t>(m.cols));
  for (index_t j = 0; j < m.cols; ++j) {
    double pivot = 0.0;
    for (index_t i = 0; i < shared_rows; ++i)
      if (std::fabs(m(i, j)) > std::fabs(pivot)) pivot = m(i, j);
    if (pivot == 0.0)
      throw DegenerateColumnError(
          "normalize_shared: column " + std::to_string(j) +
              " is zero within the shared rows",
          j);
    out.pivots[static_cast<std::size_t>(j)] = pivot;
    for (index_t i = 0; i < m.rows; ++i) out.normalized(i, j) /= pivot;
  }
  return out;
}

std::vector<index_t> max_trace_assignment(const Matrix& objective) {
  if (objective.rows != objective.cols)
    throw UsageError("max_trace_assignment: objective must be square");
  const index_t n = objective.rows;
  if (n == 0) return {};

  // Shortest augmenting path assignment on cost = -objective, with dual
  // potentials; exact in O(n^3).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<index_t> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<index_t> way(static_cast<std::size_t>(n) + 1, 0);
  for (index_t i = 1; i <= n; ++i) {
    p[0] = i;
    index_t j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const index_t i0 = p[static_cast<std::size_t>(j0)];
      index_t j1 = 0;
      double delta = inf;
      for (index_t j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = -objective(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (index_t j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const index_t j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<index_t> perm(static_cast<std::size_t>(n), 0);
  for (index_t j = 1; j <= n; ++j)
    perm[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return perm;
}

std::vector<index_t> hungarian_match(const Matrix& ref_block,
                                     const Matrix& target_block) {
  if (ref_block.rows != target_block.rows || ref_block.cols != target_block.cols)
    throw UsageError("hungarian_match: blocks must share shape");
  if (ref_block.rows < 1) throw UsageError("hungarian_match: empty blocks");
  return max_trace_assignment(gemm(ref_block, target_block, true, false));
}

AlignResult align_replicas(const std::vector<FactorTriple>& factors,
                           index_t shared_rows, index_t min_survivors) {
  if (factors.empty()) throw UsageError("align_replicas: no replicas");
  const index_t rank = factors[0].rank();
  for (const auto& f : factors)
    if (f.rank() != rank)
      throw UsageError("align_replicas: replicas disagree on rank");

  AlignResult out;
  out.dropped.assign(factors.size(), false);

  std::vector<FactorTriple> normalized(factors.size());
  for (std::size_t p = 0; p < factors.size(); ++p) {
    try {
      normalized[p] = FactorTriple(normalize_shared(factors[p].a, shared_rows).normalized,
                                   normalize_shared(factors[p].b, shared_rows).normalized,
                                   normalize_shared(factors[p].c, shared_rows).normalized);
    } catch (const DegenerateColumnError&) {
      out.dropped[p] = true;
    }
  }

  index_t ref = -1;
  for (std::size_t p = 0; p < factors.size(); ++p)
    if (!out.dropped[p]) {
      ref = static_cast<index_t>(p);
      break;
    }
  const index_t survivors =
      static_cast<index_t>(std::count(out.dropped.begin(), out.dropped.end(), false));
  if (ref < 0 || survivors < min_survivors)
    throw InsufficientReplicasError(
        "align_replicas: only " + std::to_string(survivors) + " of " +
            std::to_string(factors.size()) + " replicas survived, need " +
            std::to_string(min_survivors),
        survivors, min_survivors);

  // The anchors of all three modes feed one assignment per replica; a single
  // mode's anchor block can be too weak to separate near-parallel columns.
  const FactorTriple& refn = normalized[static_cast<std::size_t>(ref)];
  const Matrix ref_anchor[3] = {head_rows(refn.a, shared_rows),
                                head_rows(refn.b, shared_rows),
                                head_rows(refn.c, shared_rows)};
  for (std::size_t p = 0; p < factors.size(); ++p) {
    if (out.dropped[p]) continue;
    if (static_cast<index_t>(p) == ref) {
      out.aligned.push_back(normalized[p]);
    } else {
      Matrix objective =
          gemm(ref_anchor[0], head_rows(normalized[p].a, shared_rows), true, false);
      const Matrix qb =
          gemm(ref_anchor[1], head_rows(normalized[p].b, shared_rows), true, false);
      const Matrix qc =
          gemm(ref_anchor[2], head_rows(normalized[p].c, shared_rows), true, false);
      for (std::size_t i = 0; i < objective.values.size(); ++i)
        objective.values[i] += qb.values[i] + qc.values[i];
      const auto perm = max_trace_assignment(objective);
      out.aligned.push_back(FactorTriple(permute_columns(normalized[p].a, perm),
                                         permute_columns(normalized[p].b, perm),
                                         permute_columns(normalized[p].c, perm)));
    }
    out.survivors.push_back(static_cast<index_t>(p));
  }
  return out;
}

Matrix solve_stacked_ls(const std::vector<Matrix>& stacked_factors,
                        const std::vector<Matrix>& stacked_compressors) {
  if (stacked_factors.empty() || stacked_factors.size() != stacked_compressors.size())
    throw UsageError("solve_stacked_ls: factor/compressor counts differ");
  const index_t r = stacked_factors[0].cols;
  const index_t cols = stacked_compressors[0].cols;
  index_t rows = 0;
  for (std::size_t p = 0; p < stacked_factors.size(); ++p) {
    if (stacked_factors[p].cols != r || stacked_compressors[p].cols != cols ||
        stacked_factors[p].rows != stacked_compressors[p].rows)
      throw UsageError("solve_stacked_ls: inconsistent block shapes");
    rows += stacked_factors[p].rows;
  }
  if (rows < cols)
    throw IllPosedError("solve_stacked_ls: stacked system is underdetermined (" +
                            std::to_string(rows) + " rows < " + std::to_string(cols) +
                            " unknowns)",
                        rows);

  Matrix f(rows, r);
  Matrix u(rows, cols);
  index_t at = 0;
  for (std::size_t p = 0; p < stacked_factors.size(); ++p) {
    const Matrix& fp = stacked_factors[p];
    const Matrix& up = stacked_compressors[p];
    for (index_t j = 0; j < r; ++j)
      for (index_t i = 0; i < fp.rows; ++i) f(at + i, j) = fp(i, j);
    for (index_t j = 0; j < cols; ++j)
      for (index_t i = 0; i < up.rows; ++i) u(at + i, j) = up(i, j);
    at += fp.rows;
  }
  return solve_least_squares(u, f);
}

PermScale recover_perm_scale(const Matrix& global_head, const Matrix& sampled_factors) {
  if (global_head.rows != sampled_factors.rows ||
      global_head.cols != sampled_factors.cols)
    throw UsageError("recover_perm_scale: blocks must share shape");

  const auto g = normalize_shared(global_head, global_head.rows);
  const auto s = normalize_shared(sampled_factors, sampled_factors.rows);

  double max_abs = 0.0;
  for (double v : global_head.values) max_abs = std::max(max_abs, std::fabs(v));
  for (double v : sampled_factors.values) max_abs = std::max(max_abs, std::fabs(v));
  const double tiny = 1e-12 * std::max(1.0, max_abs);
  for (std::size_t j = 0; j < g.pivots.size(); ++j)
    if (std::fabs(g.pivots[j]) < tiny || std::fabs(s.pivots[j]) < tiny)
      throw DegenerateColumnError("recover_perm_scale: near-zero pivot in column " +
                                      std::to_string(j),
                                  static_cast<index_t>(j));

  PermScale ps;
  ps.perm = hungarian_match(s.normalized, g.normalized);
  ps.scale.resize(ps.perm.size());
  for (std::size_t r = 0; r < ps.perm.size(); ++r)
    ps.scale[r] = s.pivots[r] / g.pivots[static_cast<std::size_t>(ps.perm[r])];
  return ps;
}

Matrix apply_forward(const Matrix& m, const PermScale& ps) {
  check_perm_scale(ps);
  if (m.cols != static_cast<index_t>(ps.perm.size()))
    throw UsageError("apply_forward: column count does not match PermScale");
  Matrix out(m.rows, m.cols);
  for (index_t r = 0; r < m.cols; ++r) {
    const index_t src = ps.perm[static_cast<std::size_t>(r)];
    const double s = ps.scale[static_cast<std::size_t>(r)];
    for (index_t i = 0; i < m.rows; ++i) out(i, r) = m(i, src) * s;
  }
  return out;
}

Matrix apply_recovery(const Matrix& m, const PermScale& ps) {
  check_perm_scale(ps);
  if (m.cols != static_cast<index_t>(ps.perm.size()))
    throw UsageError("apply_recovery: column count does not match PermScale");
  Matrix out(m.rows, m.cols);
  for (index_t r = 0; r < m.cols; ++r) {
    const index_t dst = ps.perm[static_cast<std::size_t>(r)];
    const double s = ps.scale[static_cast<std::size_t>(r)];
    for (index_t i = 0; i < m.rows; ++i) out(i, dst) = m(i, r) / s;
  }
  return out;
}

Matrix omp_recover(const Matrix& measured, const Matrix& dictionary,
                   const OmpConfig& cfg) {
  const index_t rows = dictionary.rows;
  const index_t atoms = dictionary.cols;
  if (measured.rows != rows)
    throw UsageError("omp_recover: measured rows do not match dictionary");
  if (cfg.sparsity < 1) throw UsageError("omp_recover: sparsity must be >= 1");
  if (cfg.sparsity > atoms)
    throw UsageError("omp_recover: sparsity exceeds dictionary size");
  if (cfg.sparsity >= rows)
    throw UsageError("omp_recover: sparsity must be below the measurement count");

  std::vector<double> atom_norm(static_cast<std::size_t>(atoms));
  for (index_t j = 0; j < atoms; ++j) {
    double acc = 0.0;
    const double* c = dictionary.col(j);
    for (index_t i = 0; i < rows; ++i) acc += c[i] * c[i];
    if (acc == 0.0)
      throw UsageError("omp_recover: dictionary column " + std::to_string(j) +
                       " is zero");
    atom_norm[static_cast<std::size_t>(j)] = std::sqrt(acc);
  }

  Matrix out(atoms, measured.cols);
  std::vector<double> residual(static_cast<std::size_t>(rows));
  std::vector<double> chol;   // lower-triangular Gram factor, row-packed
  std::vector<double> rhs;    // D_active^T y
  std::vector<double> coef;
  std::vector<index_t> active;

  for (index_t col = 0; col < measured.cols; ++col) {
    const double* y = measured.col(col);
    for (index_t i = 0; i < rows; ++i) residual[static_cast<std::size_t>(i)] = y[i];
    active.clear();
    chol.clear();
    rhs.clear();
    coef.clear();

    while (static_cast<index_t>(active.size()) < cfg.sparsity) {
      double res_norm = 0.0;
      for (double v : residual) res_norm += v * v;
      if (std::sqrt(res_norm) <= cfg.residual_tol) break;

      // Atom with the largest normalized correlation against the residual.
      index_t best = -1;
      double best_corr = 0.0;
      for (index_t j = 0; j < atoms; ++j) {
        if (std::find(active.begin(), active.end(), j) != active.end()) continue;
        const double* d = dictionary.col(j);
        double dot = 0.0;
        for (index_t i = 0; i < rows; ++i)
          dot += d[i] * residual[static_cast<std::size_t>(i)];
        const double corr = std::fabs(dot) / atom_norm[static_cast<std::size_t>(j)];
        if (corr > best_corr) {
          best_corr = corr;
          best = j;
        }
      }
      if (best < 0 || best_corr == 0.0) break;

      // Grow the Cholesky factor of the active Gram matrix with the new atom.
      const std::size_t k = active.size();
      const double* dn = dictionary.col(best);
      std::vector<double> g(k);
      for (std::size_t a = 0; a < k; ++a) {
        const double* da = dictionary.col(active[a]);
        double dot = 0.0;
        for (index_t i = 0; i < rows; ++i) dot += da[i] * dn[i];
        g[a] = dot;
      }
      std::vector<double> w(k);
      for (std::size_t i = 0; i < k; ++i) {
        double s = g[i];
        for (std::size_t j = 0; j < i; ++j) s -= chol[i * (i + 1) / 2 + j] * w[j];
        w[i] = s / chol[i * (i + 1) / 2 + i];
      }
      double diag2 = 0.0;
      for (index_t i = 0; i < rows; ++i) diag2 += dn[i] * dn[i];
      for (double v : w) diag2 -= v * v;
      if (diag2 <= 1e-28) break;  // numerically dependent atom; nothing new to add

      for (double v : w) chol.push_back(v);
      chol.push_back(std::sqrt(diag2));
      active.push_back(best);
      double ydot = 0.0;
      for (index_t i = 0; i < rows; ++i) ydot += dn[i] * y[i];
      rhs.push_back(ydot);

      // Re-solve the active-set least squares: (L L^T) coef = rhs.
      const std::size_t n = active.size();
      std::vector<double> fwd(n);
      for (std::size_t i = 0; i < n; ++i) {
        double s = rhs[i];
        for (std::size_t j = 0; j < i; ++j) s -= chol[i * (i + 1) / 2 + j] * fwd[j];
        fwd[i] = s / chol[i * (i + 1) / 2 + i];
      }
      coef.assign(n, 0.0);
      for (std::size_t ii = n; ii-- > 0;) {
        double s = fwd[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= chol[j * (j + 1) / 2 + ii] * coef[j];
        coef[ii] = s / chol[ii * (ii + 1) / 2 + ii];
      }

      for (index_t i = 0; i < rows; ++i) {
        double fit = 0.0;
        for (std::size_t a = 0; a < n; ++a) fit += dictionary(i, active[a]) * coef[a];
        residual[static_cast<std::size_t>(i)] = y[i] - fit;
      }
    }

    for (std::size_t a = 0; a < active.size(); ++a) out(active[a], col) = coef[a];
  }
  return out;
}

}  // namespace xts
