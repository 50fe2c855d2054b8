#include "xts/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "xts/alignment.hpp"
#include "xts/cp_als.hpp"
#include "xts/errors.hpp"
#include "xts/linalg.hpp"
#include "xts/mixed.hpp"
#include "xts/parallel.hpp"
#include "xts/rng.hpp"

namespace xts {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix gather_rows(const Matrix& m, const std::vector<index_t>& rows) {
  Matrix out(static_cast<index_t>(rows.size()), m.cols);
  for (index_t j = 0; j < m.cols; ++j)
    for (std::size_t i = 0; i < rows.size(); ++i)
      out(static_cast<index_t>(i), j) = m(rows[i], j);
  return out;
}

Tensor3 gather_block(const Tensor3& t, const std::vector<index_t>& s1,
                     const std::vector<index_t>& s2, const std::vector<index_t>& s3) {
  Tensor3 out(static_cast<index_t>(s1.size()), static_cast<index_t>(s2.size()),
              static_cast<index_t>(s3.size()));
  for (std::size_t k = 0; k < s3.size(); ++k)
    for (std::size_t j = 0; j < s2.size(); ++j)
      for (std::size_t i = 0; i < s1.size(); ++i)
        out(static_cast<index_t>(i), static_cast<index_t>(j),
            static_cast<index_t>(k)) = t(s1[i], s2[j], s3[k]);
  return out;
}

Tensor3 reconstruct_rows(const FactorTriple& f, const std::vector<index_t>& s1,
                         const std::vector<index_t>& s2,
                         const std::vector<index_t>& s3) {
  return reconstruct(FactorTriple(gather_rows(f.a, s1), gather_rows(f.b, s2),
                                  gather_rows(f.c, s3)));
}

std::vector<index_t> leading_rows(index_t count) {
  std::vector<index_t> out(static_cast<std::size_t>(count));
  std::iota(out.begin(), out.end(), index_t{0});
  return out;
}

/// Rows carrying the most factor mass, visiting columns round-robin so every
/// column keeps its top rows represented. Needed when the factors are sparse:
/// a blind leading corner would almost surely be all zero.
std::vector<index_t> select_rows_by_mass(const Matrix& est, index_t count) {
  count = std::min(count, est.rows);
  std::vector<std::vector<index_t>> order(static_cast<std::size_t>(est.cols));
  for (index_t j = 0; j < est.cols; ++j) {
    auto& o = order[static_cast<std::size_t>(j)];
    o.resize(static_cast<std::size_t>(est.rows));
    std::iota(o.begin(), o.end(), index_t{0});
    std::sort(o.begin(), o.end(), [&](index_t x, index_t y) {
      const double ax = std::fabs(est(x, j));
      const double ay = std::fabs(est(y, j));
      return ax != ay ? ax > ay : x < y;
    });
  }
  std::vector<bool> chosen(static_cast<std::size_t>(est.rows), false);
  std::vector<std::size_t> cursor(static_cast<std::size_t>(est.cols), 0);
  std::vector<index_t> out;
  while (static_cast<index_t>(out.size()) < count) {
    bool progressed = false;
    for (index_t j = 0; j < est.cols && static_cast<index_t>(out.size()) < count; ++j) {
      auto& cur = cursor[static_cast<std::size_t>(j)];
      const auto& o = order[static_cast<std::size_t>(j)];
      while (cur < o.size() && chosen[static_cast<std::size_t>(o[cur])]) ++cur;
      if (cur < o.size()) {
        chosen[static_cast<std::size_t>(o[cur])] = true;
        out.push_back(o[cur]);
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<index_t> random_rows(index_t dim, index_t count, std::uint64_t seed) {
  count = std::min(count, dim);
  std::vector<index_t> idx(static_cast<std::size_t>(dim));
  std::iota(idx.begin(), idx.end(), index_t{0});
  Rng rng(seed);
  for (index_t i = 0; i < count; ++i) {
    const index_t j = i + static_cast<index_t>(rng.next_u64() %
                                               static_cast<std::uint64_t>(dim - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Matrix vstack(const std::vector<Matrix>& blocks) {
  index_t rows = 0;
  for (const Matrix& b : blocks) rows += b.rows;
  Matrix out(rows, blocks.empty() ? 0 : blocks[0].cols);
  index_t at = 0;
  for (const Matrix& b : blocks) {
    for (index_t j = 0; j < b.cols; ++j)
      for (index_t i = 0; i < b.rows; ++i) out(at + i, j) = b(i, j);
    at += b.rows;
  }
  return out;
}

/// Joint permutation (one assignment fed by all three modes) plus per-mode
/// pivot-ratio scales such that sampled_m ~= apply_forward(global_m, ps[m]).
/// A single permutation keeps the triple CP-consistent even when one mode's
/// match is noisy.
std::array<PermScale, 3> match_factor_triples(const FactorTriple& global,
                                              const FactorTriple& sampled) {
  const NormalizeResult g[3] = {normalize_shared(global.a, global.a.rows),
                                normalize_shared(global.b, global.b.rows),
                                normalize_shared(global.c, global.c.rows)};
  const NormalizeResult s[3] = {normalize_shared(sampled.a, sampled.a.rows),
                                normalize_shared(sampled.b, sampled.b.rows),
                                normalize_shared(sampled.c, sampled.c.rows)};
  Matrix objective = gemm(s[0].normalized, g[0].normalized, true, false);
  for (int m = 1; m < 3; ++m) {
    const Matrix q = gemm(s[m].normalized, g[m].normalized, true, false);
    for (std::size_t i = 0; i < objective.values.size(); ++i)
      objective.values[i] += q.values[i];
  }
  const std::vector<index_t> perm = max_trace_assignment(objective);

  std::array<PermScale, 3> ps;
  for (int m = 0; m < 3; ++m) {
    ps[m].perm = perm;
    ps[m].scale.resize(perm.size());
    for (std::size_t r = 0; r < perm.size(); ++r)
      ps[m].scale[r] =
          s[m].pivots[r] / g[m].pivots[static_cast<std::size_t>(perm[r])];
  }
  return ps;
}

Matrix gaussian_factor(index_t rows, index_t cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  Rng rng(seed);
  for (double& v : m.values) v = rng.normal();
  return m;
}

Matrix sparse_factor(index_t rows, index_t cols, index_t nnz, std::uint64_t seed) {
  Matrix m(rows, cols);
  for (index_t j = 0; j < cols; ++j) {
    const auto pos = random_rows(rows, nnz, Rng::derive(seed, 7000 + j));
    Rng rng(Rng::derive(seed, 9000 + j));
    for (index_t i : pos) m(i, j) = rng.normal();
  }
  return m;
}

}  // namespace

std::array<index_t, 3> TensorSource::dims() const {
  if (tensor) return {tensor->n1, tensor->n2, tensor->n3};
  if (factors) return {factors->a.rows, factors->b.rows, factors->c.rows};
  throw UsageError("TensorSource: neither tensor nor factors set");
}

Synthetic generate(const SyntheticSpec& spec, bool materialize,
                   std::uint64_t memory_budget_bytes) {
  for (index_t d : spec.dims)
    if (d < 1) throw UsageError("generate: dims must be >= 1");
  if (spec.rank < 1) throw UsageError("generate: rank must be >= 1");

  Synthetic out;
  if (spec.law == SyntheticSpec::Law::dense) {
    out.factors = FactorTriple(
        gaussian_factor(spec.dims[0], spec.rank, Rng::derive(spec.seed, 1)),
        gaussian_factor(spec.dims[1], spec.rank, Rng::derive(spec.seed, 2)),
        gaussian_factor(spec.dims[2], spec.rank, Rng::derive(spec.seed, 3)));
  } else {
    Matrix mats[3];
    for (int m = 0; m < 3; ++m) {
      const index_t nnz =
          spec.nnz_per_col > 0 ? spec.nnz_per_col : std::max<index_t>(1, spec.dims[m] / 100);
      if (nnz > spec.dims[m])
        throw UsageError("generate: nnz per column exceeds the dimension");
      mats[m] = sparse_factor(spec.dims[m], spec.rank, nnz,
                              Rng::derive(spec.seed, 4 + static_cast<std::uint64_t>(m)));
    }
    out.factors = FactorTriple(std::move(mats[0]), std::move(mats[1]), std::move(mats[2]));
  }

  if (materialize) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(spec.dims[0]) *
                                static_cast<std::uint64_t>(spec.dims[1]) *
                                static_cast<std::uint64_t>(spec.dims[2]) * 8ull;
    if (bytes > memory_budget_bytes)
      throw UsageError(
          "generate: materializing " + std::to_string(bytes) +
          " bytes exceeds the " + std::to_string(memory_budget_bytes) +
          "-byte budget; keep the problem factored and feed the factor triple "
          "(compression then runs through comp_from_factors)");
    out.tensor = reconstruct(out.factors);
  }
  return out;
}

std::string config_to_string(const PipelineConfig& cfg) {
  std::ostringstream s;
  const char* mode = cfg.mode == PipelineConfig::Mode::dense     ? "dense"
                     : cfg.mode == PipelineConfig::Mode::sparse ? "sparse"
                                                                : "two-stage";
  s << "dims=" << cfg.dims[0] << 'x' << cfg.dims[1] << 'x' << cfg.dims[2]
    << " reduced=" << cfg.reduced[0] << 'x' << cfg.reduced[1] << 'x' << cfg.reduced[2]
    << " rank=" << cfg.rank << " replicas=" << cfg.replicas << " slack=" << cfg.slack
    << " shared=" << cfg.shared << " block=" << cfg.block[0] << 'x' << cfg.block[1]
    << 'x' << cfg.block[2] << " mode=" << mode << " alpha=" << cfg.alpha
    << " beta=" << cfg.beta << " gamma=" << cfg.gamma << " s=" << cfg.projection_s
    << " omp_sparsity=" << cfg.omp_sparsity << " omp_tol=" << cfg.omp_residual_tol
    << " b=" << cfg.sample_b
    << " precision=" << (cfg.precision == PipelineConfig::Precision::full ? "full" : "mixed")
    << " deterministic=" << (cfg.deterministic ? 1 : 0) << " seed=" << cfg.seed
    << " als_iters=" << cfg.als_max_iters << " als_tol=" << cfg.als_tol
    << " fit_tol=" << cfg.replica_fit_tol << " restarts=" << cfg.als_restarts;
  return s.str();
}

FactorTriple decompose(const TensorSource& source, const PipelineConfig& cfg,
                       RunMetrics& metrics) {
  metrics = RunMetrics{};
  metrics.seed = cfg.seed;
  metrics.config_echo = config_to_string(cfg);
  metrics.config_hash = fnv1a_hex(metrics.config_echo);
  metrics.stages = {StageRecord{"compression", 0.0, "skipped", ""},
                    StageRecord{"decomposition", 0.0, "skipped", ""},
                    StageRecord{"alignment", 0.0, "skipped", ""},
                    StageRecord{"recovery", 0.0, "skipped", ""}};

  const auto dims = source.dims();
  for (int m = 0; m < 3; ++m) {
    if (cfg.dims[m] != 0 && cfg.dims[m] != dims[m])
      throw UsageError("decompose: configured dims disagree with the source");
    if (cfg.reduced[m] < 1 || cfg.reduced[m] > dims[m])
      throw UsageError("decompose: reduced dims must lie in [1, dims]");
  }
  const index_t rank = cfg.rank;
  if (rank < 1) throw UsageError("decompose: rank must be >= 1");

  const bool sparse_mode = cfg.mode == PipelineConfig::Mode::sparse;
  const bool two_stage_mode = cfg.mode == PipelineConfig::Mode::two_stage;
  if ((sparse_mode || two_stage_mode) && cfg.omp_sparsity < 1)
    throw UsageError("decompose: sparse and two-stage modes need omp_sparsity >= 1");
  if (sparse_mode || two_stage_mode) {
    const index_t min_red = std::min({cfg.reduced[0], cfg.reduced[1], cfg.reduced[2]});
    if (min_red < 2 * cfg.omp_sparsity)
      metrics.warnings.push_back(
          "reduced dims below twice the per-column sparsity budget; sparse "
          "recovery may be unreliable");
  }

  const index_t min_reduced = std::min({cfg.reduced[0], cfg.reduced[1], cfg.reduced[2]});

  index_t replicas = cfg.replicas;
  if (replicas < 1) {
    if (min_reduced < 3)
      throw UsageError("decompose: auto replica count needs reduced dims >= 3; "
                       "pass an explicit replica count");
    replicas = compute_replica_count(dims, cfg.reduced, cfg.slack);
  }

  index_t shared = cfg.shared;
  if (shared > 0 && shared > min_reduced)
    throw UsageError("decompose: shared anchor exceeds the reduced dims");
  if (shared < 1) shared = std::min<index_t>(2 * rank, min_reduced);

  std::array<index_t, 3> block = cfg.block;
  for (int m = 0; m < 3; ++m) {
    if (block[m] == 0) block[m] = dims[m];
    if (block[m] < 1 || block[m] > dims[m])
      throw UsageError("decompose: block dims must lie in [1, dims]");
  }

  index_t sample_b = cfg.sample_b;
  if (sample_b < 1) {
    sample_b = std::max<index_t>(2 * rank, 8);
    // Sparse factors need the sampled rows to cover whole column supports,
    // otherwise the block tensor is too spiky for a reliable fit.
    if (sparse_mode || two_stage_mode)
      sample_b = std::max(sample_b, cfg.omp_sparsity * rank);
  }
  sample_b = std::min({sample_b, dims[0], dims[1], dims[2]});
  if (sample_b < rank)
    metrics.warnings.push_back("sampled block has fewer rows than the rank; "
                               "permutation recovery may be ambiguous");

  const int workers = effective_workers(cfg.workers);

  // Survivor floor for the recovery stage. Dense recovery needs the stacked
  // least squares to stay overdetermined; two-stage only needs the outer
  // stack to cover the inflated dims; a deliberately small sparse run leans
  // on greedy recovery instead and gets a floor of 1.
  index_t min_survivors = 1;
  if (min_reduced >= 3) {
    const index_t bound = compute_replica_count(dims, cfg.reduced, 0);
    if (two_stage_mode)
      min_survivors = std::min<index_t>(
          replicas,
          static_cast<index_t>(std::ceil(std::max({cfg.alpha, cfg.beta, cfg.gamma}))));
    else if (sparse_mode)
      min_survivors = replicas >= bound ? bound : 1;
    else
      min_survivors = bound;
  }
  if (!sparse_mode && !two_stage_mode) {
    const index_t distinct_rows = replicas * (min_reduced - shared) + shared;
    if (distinct_rows < std::max({dims[0], dims[1], dims[2]}))
      metrics.warnings.push_back(
          "replica count gives only " + std::to_string(distinct_rows) +
          " distinct stacked rows; the stacked solve may be rank-deficient");
  }

  const double ratio_min =
      std::min({static_cast<double>(dims[0]) / static_cast<double>(cfg.reduced[0]),
                static_cast<double>(dims[1]) / static_cast<double>(cfg.reduced[1]),
                static_cast<double>(dims[2]) / static_cast<double>(cfg.reduced[2])});

  auto run_stage = [&](int idx, auto&& fn) {
    auto& rec = metrics.stages[static_cast<std::size_t>(idx)];
    const auto t0 = Clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      rec.elapsed_s = seconds_since(t0);
      rec.status = "error";
      rec.error = e.what();
      throw StageError(rec.stage, e.what());
    }
    rec.elapsed_s = seconds_since(t0);
    rec.status = "ok";
  };

  CompressionEnsemble ensemble;
  std::vector<Tensor3> replica_tensors;
  metrics.replicas_total = replicas;

  run_stage(0, [&] {
    EnsembleSpec spec;
    if (sparse_mode) {
      spec.kind = EnsembleSpec::Kind::sparse;
      spec.sparse.s = cfg.projection_s > 0.0 ? cfg.projection_s : std::max(1.0, ratio_min);
    } else if (two_stage_mode) {
      spec.kind = EnsembleSpec::Kind::two_stage;
      spec.two_stage.alpha = cfg.alpha;
      spec.two_stage.beta = cfg.beta;
      spec.two_stage.gamma = cfg.gamma;
      const double inner_ratio =
          std::min({static_cast<double>(dims[0]) / (cfg.alpha * static_cast<double>(cfg.reduced[0])),
                    static_cast<double>(dims[1]) / (cfg.beta * static_cast<double>(cfg.reduced[1])),
                    static_cast<double>(dims[2]) / (cfg.gamma * static_cast<double>(cfg.reduced[2]))});
      spec.two_stage.inner_spec.s =
          cfg.projection_s > 0.0 ? cfg.projection_s : std::max(1.0, inner_ratio);
    }
    ensemble = make_ensemble(dims, cfg.reduced, replicas, shared, spec,
                             Rng::derive(cfg.seed, 11));

    replica_tensors.resize(static_cast<std::size_t>(replicas));
    if (source.tensor) {
      if (cfg.precision == PipelineConfig::Precision::mixed) {
        if (block != dims)
          metrics.warnings.push_back("mixed precision compresses unblocked");
        const SplitTensor3 st = split_tensor(*source.tensor);
        parallel_for(replicas, workers, [&](index_t p) {
          replica_tensors[static_cast<std::size_t>(p)] =
              comp_mixed(st, split_matrix(ensemble.u[p]), split_matrix(ensemble.v[p]),
                         split_matrix(ensemble.w[p]));
        });
      } else {
        const BlockGrid grid(dims, block);
        replica_tensors =
            comp_blocked(grid, make_memory_block_source(*source.tensor, grid),
                         ensemble, cfg.deterministic, workers);
      }
    } else {
      if (cfg.precision == PipelineConfig::Precision::mixed)
        metrics.warnings.push_back(
            "mixed precision is unavailable for factored sources; using full");
      parallel_for(replicas, workers, [&](index_t p) {
        replica_tensors[static_cast<std::size_t>(p)] = comp_from_factors(
            *source.factors, ensemble.u[p], ensemble.v[p], ensemble.w[p]);
      });
    }
  });

  std::vector<FactorTriple> replica_factors;
  std::vector<index_t> decomp_survivors;
  run_stage(1, [&] {
    std::vector<AlsResult> results(static_cast<std::size_t>(replicas));
    parallel_for(replicas, workers, [&](index_t p) {
      const std::uint64_t replica_seed =
          Rng::derive(cfg.seed, 500 + static_cast<std::uint64_t>(p));
      AlsResult best;
      bool have = false;
      // Random inits swamp now and then; the first retry switches to the
      // unfolding-eigenvector init, later ones draw fresh seeds.
      for (index_t attempt = 0; attempt <= cfg.als_restarts; ++attempt) {
        AlsConfig als;
        als.rank = rank;
        als.max_iters = cfg.als_max_iters;
        als.tol = cfg.als_tol;
        als.seed = Rng::derive(replica_seed, static_cast<std::uint64_t>(attempt));
        if (attempt == 1) als.init = AlsConfig::Init::nvecs;
        AlsResult r = cp_als(replica_tensors[static_cast<std::size_t>(p)], als);
        if (!have || r.final_error() < best.final_error()) {
          best = std::move(r);
          have = true;
        }
        if (best.converged && best.final_error() <= cfg.replica_fit_tol) break;
      }
      results[static_cast<std::size_t>(p)] = std::move(best);
    });
    for (index_t p = 0; p < replicas; ++p) {
      const AlsResult& r = results[static_cast<std::size_t>(p)];
      if (r.converged && r.final_error() <= cfg.replica_fit_tol) {
        replica_factors.push_back(r.factors);
        decomp_survivors.push_back(p);
      }
    }
    metrics.replicas_dropped = replicas - static_cast<index_t>(replica_factors.size());
    if (replica_factors.empty())
      throw InsufficientReplicasError("decompose: every replica failed to fit",
                                      0, min_survivors);
  });

  AlignResult aligned;
  std::vector<index_t> survivor_indices;  // original replica indices
  run_stage(2, [&] {
    aligned = align_replicas(replica_factors, shared, min_survivors);
    for (index_t i : aligned.survivors)
      survivor_indices.push_back(decomp_survivors[static_cast<std::size_t>(i)]);
    metrics.replicas_dropped = replicas - static_cast<index_t>(survivor_indices.size());
  });

  FactorTriple recovered;
  run_stage(3, [&] {
    std::vector<Matrix> stack_f[3];
    std::vector<Matrix> stack_u[3];
    for (std::size_t i = 0; i < survivor_indices.size(); ++i) {
      const FactorTriple& f = aligned.aligned[i];
      const index_t p = survivor_indices[i];
      stack_f[0].push_back(f.a);
      stack_f[1].push_back(f.b);
      stack_f[2].push_back(f.c);
      if (two_stage_mode) {
        stack_u[0].push_back(ensemble.two_stage->u_outer[p]);
        stack_u[1].push_back(ensemble.two_stage->v_outer[p]);
        stack_u[2].push_back(ensemble.two_stage->w_outer[p]);
      } else {
        stack_u[0].push_back(ensemble.u[p]);
        stack_u[1].push_back(ensemble.v[p]);
        stack_u[2].push_back(ensemble.w[p]);
      }
    }

    OmpConfig omp;
    omp.sparsity = cfg.omp_sparsity;
    omp.residual_tol = cfg.omp_residual_tol;

    index_t stacked_rows = 0;
    for (const Matrix& m : stack_f[0]) stacked_rows += m.rows;

    // Per-mode estimate of the factor up to a common permutation/scaling.
    Matrix est[3];
    Matrix inner[3];
    if (two_stage_mode) {
      inner[0] = ensemble.two_stage->u_inner;
      inner[1] = ensemble.two_stage->v_inner;
      inner[2] = ensemble.two_stage->w_inner;
    }
    for (int m = 0; m < 3; ++m) {
      if (two_stage_mode) {
        est[m] = omp_recover(solve_stacked_ls(stack_f[m], stack_u[m]), inner[m], omp);
      } else if (sparse_mode && stacked_rows < dims[m]) {
        est[m] = omp_recover(vstack(stack_f[m]), vstack(stack_u[m]), omp);
      } else if (sparse_mode) {
        try {
          est[m] = solve_stacked_ls(stack_f[m], stack_u[m]);
        } catch (const IllPosedError& e) {
          // Sparse recovery does not need a full-rank stack.
          metrics.warnings.push_back(std::string("stacked solve ill-posed (") +
                                     e.what() + "); using greedy recovery");
          est[m] = omp_recover(vstack(stack_f[m]), vstack(stack_u[m]), omp);
        }
      } else {
        est[m] = solve_stacked_ls(stack_f[m], stack_u[m]);
      }
    }

    // Sampled block: leading corner for dense data, mass-ranked rows when the
    // factors are sparse and the corner would be structurally empty.
    std::vector<index_t> sel[3];
    for (int m = 0; m < 3; ++m)
      sel[m] = (sparse_mode || two_stage_mode) ? select_rows_by_mass(est[m], sample_b)
                                               : leading_rows(std::min(sample_b, dims[m]));
    const Tensor3 sample_block =
        source.tensor ? gather_block(*source.tensor, sel[0], sel[1], sel[2])
                      : reconstruct_rows(*source.factors, sel[0], sel[1], sel[2]);

    AlsResult block_best;
    bool have_block = false;
    for (int attempt = 0; attempt < 3; ++attempt) {
      AlsConfig als;
      als.rank = rank;
      als.max_iters = cfg.als_max_iters;
      als.tol = cfg.als_tol;
      als.seed = Rng::derive(cfg.seed, 31 + static_cast<std::uint64_t>(attempt));
      if (attempt == 1) als.init = AlsConfig::Init::nvecs;
      AlsResult r = cp_als(sample_block, als);
      if (!have_block || r.final_error() < block_best.final_error()) {
        block_best = std::move(r);
        have_block = true;
      }
      if (block_best.final_error() <= 1e-6) break;
    }
    if (block_best.final_error() > 1e-6)
      metrics.warnings.push_back(
          "sampled block fit is poor (relative error " +
          std::to_string(block_best.final_error()) +
          "); permutation/scale recovery may be unreliable");

    const FactorTriple global_heads(gather_rows(est[0], sel[0]),
                                    gather_rows(est[1], sel[1]),
                                    gather_rows(est[2], sel[2]));
    const auto ps = match_factor_triples(global_heads, block_best.factors);

    Matrix final_modes[3];
    for (int m = 0; m < 3; ++m) {
      if (sparse_mode) {
        // Re-solve the stacked system sparsely in the recovered column order;
        // this pins exact supports with least-squares coefficients.
        final_modes[m] =
            omp_recover(apply_forward(vstack(stack_f[m]), ps[m]), vstack(stack_u[m]), omp);
      } else {
        final_modes[m] = apply_forward(est[m], ps[m]);
      }
    }
    recovered = FactorTriple(std::move(final_modes[0]), std::move(final_modes[1]),
                             std::move(final_modes[2]));

    // Held-out sample MSE on randomly drawn rows.
    std::vector<index_t> hold[3];
    for (int m = 0; m < 3; ++m)
      hold[m] = random_rows(dims[m], sample_b, Rng::derive(cfg.seed, 41 + static_cast<std::uint64_t>(m)));
    const Tensor3 truth_block =
        source.tensor ? gather_block(*source.tensor, hold[0], hold[1], hold[2])
                      : reconstruct_rows(*source.factors, hold[0], hold[1], hold[2]);
    metrics.sample_mse =
        mse(truth_block, reconstruct_rows(recovered, hold[0], hold[1], hold[2]));
  });

  return recovered;
}

EvalReport evaluate(const FactorTriple& truth, const FactorTriple& recovered,
                    index_t sample) {
  if (truth.a.rows != recovered.a.rows || truth.b.rows != recovered.b.rows ||
      truth.c.rows != recovered.c.rows)
    throw UsageError("evaluate: factor dimensions disagree");
  if (truth.rank() != recovered.rank())
    throw UsageError("evaluate: ranks disagree");

  EvalReport rep;
  const auto ps = match_factor_triples(recovered, truth);
  rep.aligned = FactorTriple(apply_forward(recovered.a, ps[0]),
                             apply_forward(recovered.b, ps[1]),
                             apply_forward(recovered.c, ps[2]));
  const Matrix* t[3] = {&truth.a, &truth.b, &truth.c};
  const Matrix* al[3] = {&rep.aligned.a, &rep.aligned.b, &rep.aligned.c};
  for (int m = 0; m < 3; ++m) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < t[m]->values.size(); ++i) {
      const double d = t[m]->values[i] - al[m]->values[i];
      num += d * d;
      den += t[m]->values[i] * t[m]->values[i];
    }
    rep.mode_rel_err[m] = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  }

  index_t b = sample > 0 ? sample : std::max<index_t>(2 * truth.rank(), 8);
  b = std::min({b, truth.a.rows, truth.b.rows, truth.c.rows});
  rep.sample_size = b;
  const auto head = leading_rows(b);
  rep.sample_mse = mse(reconstruct_rows(truth, head, head, head),
                       reconstruct_rows(recovered, head, head, head));
  return rep;
}

EvalReport evaluate(const Tensor3& truth, const FactorTriple& recovered,
                    index_t sample) {
  if (truth.n1 != recovered.a.rows || truth.n2 != recovered.b.rows ||
      truth.n3 != recovered.c.rows)
    throw UsageError("evaluate: dimensions disagree");
  EvalReport rep;
  index_t b = sample > 0 ? sample : std::max<index_t>(2 * recovered.rank(), 8);
  b = std::min({b, truth.n1, truth.n2, truth.n3});
  rep.sample_size = b;
  const auto head = leading_rows(b);
  rep.sample_mse = mse(gather_block(truth, head, head, head),
                       reconstruct_rows(recovered, head, head, head));
  rep.aligned = recovered;
  return rep;
}

}  // namespace xts
