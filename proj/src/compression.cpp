#include "xts/compression.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <string>

#include "xts/errors.hpp"
#include "xts/linalg.hpp"
#include "xts/parallel.hpp"
#include "xts/rng.hpp"

namespace xts {

namespace {

index_t ceil_div(index_t a, index_t b) { return (a + b - 1) / b; }

double three_point_draw(Rng& rng, double s) {
  const double u = rng.uniform01();
  const double root = std::sqrt(s);
  if (u < 0.5 / s) return root;
  if (u < 1.0 / s) return -root;
  return 0.0;
}

void check_sparse_spec(const SparseProjectionSpec& spec, index_t cols) {
  if (spec.s < 1.0) throw UsageError("sparse projection: s must be >= 1");
  if (cols > 1) {
    const double bound = static_cast<double>(cols) / std::log(static_cast<double>(cols));
    if (spec.s > bound)
      throw UsageError("sparse projection: s = " + std::to_string(spec.s) +
                       " exceeds the validity bound dim/log(dim) = " +
                       std::to_string(bound));
  } else if (spec.s != 1.0) {
    throw UsageError("sparse projection: s must be 1 for a single column");
  }
}

void fill_row(Matrix& m, index_t row, std::uint64_t seed, ProjectionKind kind,
              double s) {
  Rng rng(seed);
  for (index_t j = 0; j < m.cols; ++j)
    m(row, j) = kind == ProjectionKind::gaussian ? rng.normal()
                                                 : three_point_draw(rng, s);
}

// One mode's replica matrices: the first shared_rows rows come from the
// shared stream, the rest from the replica stream. Rows are generated from
// per-row sub-seeds so changing shared_rows never disturbs the other rows.
std::vector<Matrix> gen_mode_matrices(index_t rows, index_t cols, index_t count,
                                      index_t shared_rows, ProjectionKind kind,
                                      double s, std::uint64_t shared_seed,
                                      std::uint64_t seed, std::uint64_t mode_tag) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(count));
  for (index_t p = 0; p < count; ++p) {
    Matrix m(rows, cols);
    const std::uint64_t replica_seed =
        Rng::derive(seed, 1000 + 8 * static_cast<std::uint64_t>(p) + mode_tag);
    for (index_t r = 0; r < rows; ++r) {
      // Anchor rows are always Gaussian, whatever law the bulk follows: they
      // exist to give every factor column a distinctive signature, and sparse
      // anchors are too spiky to tell near-parallel columns apart.
      const bool shared = r < shared_rows;
      fill_row(m, r, Rng::derive(shared ? shared_seed : replica_seed, r),
               shared ? ProjectionKind::gaussian : kind, s);
    }
    out.push_back(std::move(m));
  }
  return out;
}

Matrix plain_gemm(const Matrix& a, const Matrix& b) { return gemm(a, b); }

void add_inplace(Tensor3& acc, const Tensor3& t) {
  for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += t.values[i];
}

}  // namespace

index_t compute_replica_count(const std::array<index_t, 3>& dims,
                              const std::array<index_t, 3>& reduced, index_t slack) {
  for (int m = 0; m < 3; ++m) {
    if (reduced[m] < 3)
      throw UsageError("compute_replica_count: reduced dims must be >= 3");
    if (reduced[m] > dims[m])
      throw UsageError("compute_replica_count: reduced dim exceeds original");
  }
  if (slack < 0) throw UsageError("compute_replica_count: slack must be >= 0");
  const index_t bound = std::max({ceil_div(dims[0] - 2, reduced[0] - 2),
                                  ceil_div(dims[1], reduced[1]),
                                  ceil_div(dims[2], reduced[2])});
  return bound + slack;
}

Matrix gen_gaussian(index_t rows, index_t cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) throw UsageError("gen_gaussian: dims must be >= 1");
  Matrix m(rows, cols);
  Rng rng(seed);
  for (double& v : m.values) v = rng.normal();
  return m;
}

Matrix gen_sparse_projection(index_t rows, index_t cols,
                             const SparseProjectionSpec& spec, std::uint64_t seed) {
  if (rows < 1 || cols < 1) throw UsageError("gen_sparse_projection: dims must be >= 1");
  check_sparse_spec(spec, cols);
  Matrix m(rows, cols);
  Rng rng(seed);
  for (double& v : m.values) v = three_point_draw(rng, spec.s);
  return m;
}

CompressionEnsemble make_ensemble(const std::array<index_t, 3>& dims,
                                  const std::array<index_t, 3>& reduced,
                                  index_t count, index_t shared_rows,
                                  const EnsembleSpec& spec, std::uint64_t seed) {
  if (count < 1) throw UsageError("make_ensemble: count must be >= 1");
  if (shared_rows < 0) throw UsageError("make_ensemble: shared_rows must be >= 0");
  for (int m = 0; m < 3; ++m) {
    if (dims[m] < 1 || reduced[m] < 1)
      throw UsageError("make_ensemble: dims must be >= 1");
    if (reduced[m] > dims[m])
      throw UsageError("make_ensemble: reduced dim exceeds original");
    if (shared_rows > reduced[m])
      throw UsageError("make_ensemble: shared_rows exceeds reduced dim");
  }

  CompressionEnsemble out;
  out.count = count;
  out.shared_rows = shared_rows;
  out.seed = seed;

  const std::uint64_t shared_u = Rng::derive(seed, 101);
  const std::uint64_t shared_v = Rng::derive(seed, 102);
  const std::uint64_t shared_w = Rng::derive(seed, 103);

  switch (spec.kind) {
    case EnsembleSpec::Kind::gaussian:
    case EnsembleSpec::Kind::sparse: {
      const bool sparse = spec.kind == EnsembleSpec::Kind::sparse;
      const ProjectionKind kind =
          sparse ? ProjectionKind::sparse : ProjectionKind::gaussian;
      if (sparse)
        for (int m = 0; m < 3; ++m) check_sparse_spec(spec.sparse, dims[m]);
      const double s = spec.sparse.s;
      out.u = gen_mode_matrices(reduced[0], dims[0], count, shared_rows, kind, s,
                                shared_u, seed, 0);
      out.v = gen_mode_matrices(reduced[1], dims[1], count, shared_rows, kind, s,
                                shared_v, seed, 1);
      out.w = gen_mode_matrices(reduced[2], dims[2], count, shared_rows, kind, s,
                                shared_w, seed, 2);
      return out;
    }
    case EnsembleSpec::Kind::two_stage: {
      const TwoStageSpec& ts = spec.two_stage;
      if (!(ts.alpha > 1.0 && ts.beta > 1.0 && ts.gamma > 1.0))
        throw UsageError("make_ensemble: two-stage ratios must be > 1");
      const index_t inner_rows[3] = {
          static_cast<index_t>(std::llround(ts.alpha * static_cast<double>(reduced[0]))),
          static_cast<index_t>(std::llround(ts.beta * static_cast<double>(reduced[1]))),
          static_cast<index_t>(std::llround(ts.gamma * static_cast<double>(reduced[2])))};
      for (int m = 0; m < 3; ++m) {
        if (inner_rows[m] <= reduced[m] || inner_rows[m] > dims[m])
          throw UsageError("make_ensemble: inner dimension out of range");
        if (ts.inner_kind == ProjectionKind::sparse)
          check_sparse_spec(ts.inner_spec, dims[m]);
      }

      CompressionEnsemble::TwoStageParts parts;
      auto gen_inner = [&](index_t rows, index_t cols, std::uint64_t tag) {
        return ts.inner_kind == ProjectionKind::sparse
                   ? gen_sparse_projection(rows, cols, ts.inner_spec,
                                           Rng::derive(seed, tag))
                   : gen_gaussian(rows, cols, Rng::derive(seed, tag));
      };
      parts.u_inner = gen_inner(inner_rows[0], dims[0], 201);
      parts.v_inner = gen_inner(inner_rows[1], dims[1], 202);
      parts.w_inner = gen_inner(inner_rows[2], dims[2], 203);
      parts.u_outer = gen_mode_matrices(reduced[0], inner_rows[0], count, shared_rows,
                                        ProjectionKind::gaussian, 1.0, shared_u, seed, 0);
      parts.v_outer = gen_mode_matrices(reduced[1], inner_rows[1], count, shared_rows,
                                        ProjectionKind::gaussian, 1.0, shared_v, seed, 1);
      parts.w_outer = gen_mode_matrices(reduced[2], inner_rows[2], count, shared_rows,
                                        ProjectionKind::gaussian, 1.0, shared_w, seed, 2);
      out.u.reserve(static_cast<std::size_t>(count));
      out.v.reserve(static_cast<std::size_t>(count));
      out.w.reserve(static_cast<std::size_t>(count));
      for (index_t p = 0; p < count; ++p) {
        out.u.push_back(gemm(parts.u_outer[p], parts.u_inner));
        out.v.push_back(gemm(parts.v_outer[p], parts.v_inner));
        out.w.push_back(gemm(parts.w_outer[p], parts.w_inner));
      }
      out.two_stage = std::move(parts);
      return out;
    }
  }
  throw UsageError("make_ensemble: unknown ensemble kind");
}

Tensor3 comp_with(const Tensor3& t, const Matrix& u, const Matrix& v,
                  const Matrix& w, GemmFn multiply) {
  if (u.cols != t.n1 || v.cols != t.n2 || w.cols != t.n3)
    throw UsageError("comp: compression matrix columns must match tensor dims");
  Tensor3 s1 = fold(multiply(u, matricize(t, 1)), 1, u.rows, t.n2, t.n3);
  Tensor3 s2 = fold(multiply(v, matricize(s1, 2)), 2, u.rows, v.rows, t.n3);
  return fold(multiply(w, matricize(s2, 3)), 3, u.rows, v.rows, w.rows);
}

Tensor3 comp(const Tensor3& t, const Matrix& u, const Matrix& v, const Matrix& w) {
  return comp_with(t, u, v, w, &plain_gemm);
}

Tensor3 comp_from_factors(const FactorTriple& f, const Matrix& u, const Matrix& v,
                          const Matrix& w) {
  if (u.cols != f.a.rows || v.cols != f.b.rows || w.cols != f.c.rows)
    throw UsageError("comp_from_factors: compression matrix columns must match factors");
  return reconstruct(FactorTriple(gemm(u, f.a), gemm(v, f.b), gemm(w, f.c)));
}

BlockGrid::BlockGrid(const std::array<index_t, 3>& dims,
                     const std::array<index_t, 3>& block)
    : n1(dims[0]), n2(dims[1]), n3(dims[2]), d1(block[0]), d2(block[1]), d3(block[2]) {
  if (n1 < 1 || n2 < 1 || n3 < 1) throw UsageError("BlockGrid: dims must be >= 1");
  if (d1 < 1 || d2 < 1 || d3 < 1)
    throw UsageError("BlockGrid: block dims must be >= 1");
  if (d1 > n1 || d2 > n2 || d3 > n3)
    throw UsageError("BlockGrid: block dims exceed tensor dims");
}

index_t BlockGrid::cells(int mode) const {
  switch (mode) {
    case 1: return ceil_div(n1, d1);
    case 2: return ceil_div(n2, d2);
    case 3: return ceil_div(n3, d3);
    default: throw UsageError("BlockGrid::cells: mode must be 1, 2 or 3");
  }
}

BlockGrid::Extent BlockGrid::extent(int mode, index_t cell) const {
  const index_t n = mode == 1 ? n1 : mode == 2 ? n2 : n3;
  const index_t d = mode == 1 ? d1 : mode == 2 ? d2 : d3;
  if (cell < 0 || cell >= cells(mode))
    throw UsageError("BlockGrid::extent: cell index out of range");
  const index_t offset = cell * d;
  return {offset, std::min(d, n - offset)};
}

index_t BlockGrid::linear_cell(const std::array<index_t, 3>& cell) const {
  return cell[0] + cells(1) * (cell[1] + cells(2) * cell[2]);
}

BlockSource make_memory_block_source(const Tensor3& t, const BlockGrid& grid) {
  if (t.n1 != grid.n1 || t.n2 != grid.n2 || t.n3 != grid.n3)
    throw UsageError("make_memory_block_source: grid does not match tensor dims");
  auto cursor = std::make_shared<index_t>(0);
  const Tensor3* src = &t;
  BlockGrid g = grid;
  return [cursor, src, g]() -> std::optional<BlockRecord> {
    if (*cursor >= g.cell_count()) return std::nullopt;
    const index_t linear = (*cursor)++;
    const index_t c1 = linear % g.cells(1);
    const index_t c2 = (linear / g.cells(1)) % g.cells(2);
    const index_t c3 = linear / (g.cells(1) * g.cells(2));
    const auto e1 = g.extent(1, c1);
    const auto e2 = g.extent(2, c2);
    const auto e3 = g.extent(3, c3);
    BlockRecord rec;
    rec.cell = {c1, c2, c3};
    rec.data = Tensor3(e1.length, e2.length, e3.length);
    for (index_t k = 0; k < e3.length; ++k)
      for (index_t j = 0; j < e2.length; ++j)
        for (index_t i = 0; i < e1.length; ++i)
          rec.data(i, j, k) = (*src)(e1.offset + i, e2.offset + j, e3.offset + k);
    return rec;
  };
}

Matrix col_slice(const Matrix& m, index_t offset, index_t length) {
  if (offset < 0 || length < 0 || offset + length > m.cols)
    throw UsageError("col_slice: range out of bounds");
  Matrix out(m.rows, length);
  std::memcpy(out.values.data(), m.values.data() + offset * m.rows,
              static_cast<std::size_t>(length * m.rows) * sizeof(double));
  return out;
}

namespace {

// Pairwise merging of per-replica partial sums: partials carry a binary
// counter of levels so the reduction tree stays balanced however many blocks
// stream through.
struct TreeAccumulator {
  std::vector<std::optional<Tensor3>> levels;

  void push(Tensor3 t) {
    std::size_t level = 0;
    for (;;) {
      if (level == levels.size()) levels.emplace_back();
      if (!levels[level]) {
        levels[level] = std::move(t);
        return;
      }
      add_inplace(t, *levels[level]);
      levels[level].reset();
      ++level;
    }
  }

  Tensor3 finalize(index_t l, index_t m, index_t n) {
    Tensor3 acc(l, m, n);
    for (auto& slot : levels)
      if (slot) add_inplace(acc, *slot);
    return acc;
  }
};

void validate_record(const BlockGrid& grid, const BlockRecord& rec) {
  for (int m = 0; m < 3; ++m)
    if (rec.cell[m] < 0 || rec.cell[m] >= grid.cells(m + 1))
      throw DataError("comp_blocked: block cell index out of range");
  const auto e1 = grid.extent(1, rec.cell[0]);
  const auto e2 = grid.extent(2, rec.cell[1]);
  const auto e3 = grid.extent(3, rec.cell[2]);
  if (rec.data.n1 != e1.length || rec.data.n2 != e2.length || rec.data.n3 != e3.length)
    throw DataError("comp_blocked: block shape does not match its cell");
}

}  // namespace

std::vector<Tensor3> comp_blocked(const BlockGrid& grid, const BlockSource& source,
                                  const CompressionEnsemble& ensemble,
                                  bool deterministic, int workers) {
  const auto dims = ensemble.source_dims();
  if (dims[0] != grid.n1 || dims[1] != grid.n2 || dims[2] != grid.n3)
    throw UsageError("comp_blocked: ensemble does not match grid dims");
  const auto reduced = ensemble.reduced_dims();
  const index_t p_count = ensemble.count;

  std::vector<bool> seen(static_cast<std::size_t>(grid.cell_count()), false);
  index_t seen_count = 0;

  auto mark_seen = [&](const BlockRecord& rec) {
    const index_t linear = grid.linear_cell(rec.cell);
    if (seen[static_cast<std::size_t>(linear)])
      throw DataError("comp_blocked: duplicate block for cell " +
                      std::to_string(linear));
    seen[static_cast<std::size_t>(linear)] = true;
    ++seen_count;
  };

  std::vector<Tensor3> replicas;

  if (deterministic) {
    // Reassemble, then compress once: the only evaluation whose result is
    // bitwise independent of the grid shape.
    Tensor3 assembled(grid.n1, grid.n2, grid.n3);
    while (auto rec = source()) {
      validate_record(grid, *rec);
      mark_seen(*rec);
      const auto e1 = grid.extent(1, rec->cell[0]);
      const auto e2 = grid.extent(2, rec->cell[1]);
      const auto e3 = grid.extent(3, rec->cell[2]);
      for (index_t k = 0; k < e3.length; ++k)
        for (index_t j = 0; j < e2.length; ++j)
          for (index_t i = 0; i < e1.length; ++i)
            assembled(e1.offset + i, e2.offset + j, e3.offset + k) = rec->data(i, j, k);
    }
    if (seen_count != grid.cell_count())
      throw DataError("comp_blocked: missing blocks (" + std::to_string(seen_count) +
                      " of " + std::to_string(grid.cell_count()) + ")");
    replicas.resize(static_cast<std::size_t>(p_count));
    parallel_for(p_count, workers, [&](index_t p) {
      replicas[static_cast<std::size_t>(p)] =
          comp(assembled, ensemble.u[p], ensemble.v[p], ensemble.w[p]);
    });
    return replicas;
  }

  std::vector<TreeAccumulator> acc(static_cast<std::size_t>(p_count));
  while (auto rec = source()) {
    validate_record(grid, *rec);
    mark_seen(*rec);
    const auto e1 = grid.extent(1, rec->cell[0]);
    const auto e2 = grid.extent(2, rec->cell[1]);
    const auto e3 = grid.extent(3, rec->cell[2]);
    parallel_for(p_count, workers, [&](index_t p) {
      acc[static_cast<std::size_t>(p)].push(
          comp(rec->data, col_slice(ensemble.u[p], e1.offset, e1.length),
               col_slice(ensemble.v[p], e2.offset, e2.length),
               col_slice(ensemble.w[p], e3.offset, e3.length)));
    });
  }
  if (seen_count != grid.cell_count())
    throw DataError("comp_blocked: missing blocks (" + std::to_string(seen_count) +
                    " of " + std::to_string(grid.cell_count()) + ")");
  replicas.resize(static_cast<std::size_t>(p_count));
  parallel_for(p_count, workers, [&](index_t p) {
    replicas[static_cast<std::size_t>(p)] =
        acc[static_cast<std::size_t>(p)].finalize(reduced[0], reduced[1], reduced[2]);
  });
  return replicas;
}

}  // namespace xts
