#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "xts/tensor.hpp"

namespace xts {

/// Three-point sparse projection law: entries are ±sqrt(s) with probability
/// 1/(2s) each and 0 otherwise. s is the expected entry count per nonzero.
struct SparseProjectionSpec {
  double s = 1.0;
};

enum class ProjectionKind { gaussian, sparse };

/// Factored construction u[p] = u_outer[p] * u_inner with inner dimensions
/// inflated by alpha/beta/gamma (> 1). The inner matrix is shared across
/// replicas and defaults to a sparse projection so its pseudo-inverse problem
/// stays friendly to greedy sparse recovery.
struct TwoStageSpec {
  double alpha = 1.6;
  double beta = 1.6;
  double gamma = 1.6;
  ProjectionKind inner_kind = ProjectionKind::sparse;
  SparseProjectionSpec inner_spec{};
};

struct EnsembleSpec {
  enum class Kind { gaussian, sparse, two_stage } kind = Kind::gaussian;
  SparseProjectionSpec sparse{};
  TwoStageSpec two_stage{};
};

/// P triples of compression matrices with a common anchor: the leading
/// shared_rows rows of u[p] are identical across replicas (likewise v, w).
/// The anchor is what makes the per-replica factors comparable after
/// decomposition, since the head rows of u[p]*A agree across p up to each
/// replica's column permutation and scaling.
struct CompressionEnsemble {
  index_t count = 0;
  index_t shared_rows = 0;
  std::vector<Matrix> u, v, w;  // materialized, one per replica

  struct TwoStageParts {
    std::vector<Matrix> u_outer, v_outer, w_outer;
    Matrix u_inner, v_inner, w_inner;
  };
  std::optional<TwoStageParts> two_stage;

  std::uint64_t seed = 0;

  std::array<index_t, 3> reduced_dims() const {
    return {u.empty() ? 0 : u[0].rows, v.empty() ? 0 : v[0].rows,
            w.empty() ? 0 : w[0].rows};
  }
  std::array<index_t, 3> source_dims() const {
    return {u.empty() ? 0 : u[0].cols, v.empty() ? 0 : v[0].cols,
            w.empty() ? 0 : w[0].cols};
  }
};

/// Replica count needed for stable recovery at the given reduction, plus
/// slack for replicas that may be dropped later:
/// ceil(max((I-2)/(L-2), J/M, K/N)) + slack.
index_t compute_replica_count(const std::array<index_t, 3>& dims,
                              const std::array<index_t, 3>& reduced, index_t slack);

/// Seed-deterministic i.i.d. N(0,1) matrix.
Matrix gen_gaussian(index_t rows, index_t cols, std::uint64_t seed);

/// Seed-deterministic sparse projection matrix under the three-point law.
Matrix gen_sparse_projection(index_t rows, index_t cols,
                             const SparseProjectionSpec& spec, std::uint64_t seed);

CompressionEnsemble make_ensemble(const std::array<index_t, 3>& dims,
                                  const std::array<index_t, 3>& reduced,
                                  index_t count, index_t shared_rows,
                                  const EnsembleSpec& spec, std::uint64_t seed);

/// Y(l,m,n) = sum_{ijk} u(l,i) v(m,j) w(n,k) t(i,j,k), evaluated as three
/// successive mode products (mode 1, then 2, then 3), never the raw sum.
Tensor3 comp(const Tensor3& t, const Matrix& u, const Matrix& v, const Matrix& w);

/// Same contraction with a caller-supplied matrix multiply, so alternative
/// arithmetic models can reuse the mode-product skeleton.
using GemmFn = Matrix (*)(const Matrix&, const Matrix&);
Tensor3 comp_with(const Tensor3& t, const Matrix& u, const Matrix& v,
                  const Matrix& w, GemmFn multiply);

/// Compressed replica of reconstruct(f) computed in factored form,
/// reconstruct((u*a, v*b, w*c)), without materializing the source tensor.
Tensor3 comp_from_factors(const FactorTriple& f, const Matrix& u, const Matrix& v,
                          const Matrix& w);

/// Regular tiling of a tensor into blocks of at most d1×d2×d3, ragged at the
/// upper edges. Cells iterate mode-1 fastest.
struct BlockGrid {
  index_t n1 = 0, n2 = 0, n3 = 0;
  index_t d1 = 0, d2 = 0, d3 = 0;

  BlockGrid() = default;
  BlockGrid(const std::array<index_t, 3>& dims, const std::array<index_t, 3>& block);

  index_t cells(int mode) const;
  index_t cell_count() const { return cells(1) * cells(2) * cells(3); }

  struct Extent {
    index_t offset = 0;
    index_t length = 0;
  };
  Extent extent(int mode, index_t cell) const;
  index_t linear_cell(const std::array<index_t, 3>& cell) const;
};

struct BlockRecord {
  std::array<index_t, 3> cell{};
  Tensor3 data;
};

/// Pull-based producer; returns nullopt when exhausted.
using BlockSource = std::function<std::optional<BlockRecord>()>;

/// In-memory splitter over an assembled tensor, in grid order.
BlockSource make_memory_block_source(const Tensor3& t, const BlockGrid& grid);

/// Compress a blocked stream into the P replicas. Every element must be
/// covered by exactly one record; gaps and duplicates are data errors.
/// Deterministic mode reassembles the validated blocks and runs the one-shot
/// comp, so its output is bitwise identical to comp on the assembled tensor
/// regardless of grid shape. Fast mode compresses blocks as they arrive and
/// merges per-replica partials with a pairwise tree.
std::vector<Tensor3> comp_blocked(const BlockGrid& grid, const BlockSource& source,
                                  const CompressionEnsemble& ensemble,
                                  bool deterministic = true, int workers = 1);

/// Contiguous column slice [offset, offset+length).
Matrix col_slice(const Matrix& m, index_t offset, index_t length);

}  // namespace xts
