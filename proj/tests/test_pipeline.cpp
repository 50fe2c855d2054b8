#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "xts/alignment.hpp"
#include "xts/cp_als.hpp"
#include "xts/errors.hpp"
#include "xts/io.hpp"
#include "xts/metrics.hpp"
#include "xts/parallel.hpp"
#include "xts/pipeline.hpp"
#include "xts/tensor.hpp"

using namespace xts;
namespace ts = xts::testsupport;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("generate materializes exactly the reconstruction of its factors") {
  SyntheticSpec spec;
  spec.dims = {4, 4, 4};
  spec.rank = 1;
  spec.seed = 5;
  const Synthetic syn = generate(spec);
  REQUIRE(syn.tensor.has_value());
  CHECK(syn.tensor->values == reconstruct(syn.factors).values);
}

TEST_CASE("sparse generation places exactly the requested nonzeros") {
  SyntheticSpec spec;
  spec.dims = {500, 400, 300};
  spec.rank = 3;
  spec.law = SyntheticSpec::Law::sparse;
  spec.nnz_per_col = 5;
  spec.seed = 6;
  const Synthetic syn = generate(spec, /*materialize=*/false);
  for (const Matrix* m : {&syn.factors.a, &syn.factors.b, &syn.factors.c})
    for (index_t j = 0; j < 3; ++j) {
      index_t nnz = 0;
      for (index_t i = 0; i < m->rows; ++i)
        if ((*m)(i, j) != 0.0) ++nnz;
      CHECK(nnz == 5);
    }

  // paper default: one hundredth of the dimension
  SyntheticSpec def = spec;
  def.nnz_per_col = 0;
  const Synthetic d = generate(def, false);
  index_t nnz = 0;
  for (index_t i = 0; i < 400; ++i)
    if (d.factors.b(i, 0) != 0.0) ++nnz;
  CHECK(nnz == 4);
}

TEST_CASE("generation is seed-deterministic") {
  SyntheticSpec spec;
  spec.dims = {8, 9, 10};
  spec.rank = 2;
  spec.seed = 7;
  const Synthetic a = generate(spec);
  const Synthetic b = generate(spec);
  CHECK(a.factors.a.values == b.factors.a.values);
  CHECK(a.tensor->values == b.tensor->values);
}

TEST_CASE("generate refuses to materialize past the budget") {
  SyntheticSpec spec;
  spec.dims = {500, 500, 500};
  spec.rank = 2;
  spec.seed = 1;
  try {
    generate(spec, true, 64ull << 20);
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("factored") != std::string::npos);
  }
  CHECK_NOTHROW(generate(spec, false, 64ull << 20));
}

TEST_CASE("degenerate path matches direct als quality") {
  SyntheticSpec spec;
  spec.dims = {16, 16, 16};
  spec.rank = 3;
  spec.seed = 11;
  const Synthetic syn = generate(spec);

  AlsConfig als;
  als.rank = 3;
  als.seed = 12;
  als.init = AlsConfig::Init::nvecs;
  const double direct = cp_als(*syn.tensor, als).final_error();

  PipelineConfig cfg;
  cfg.dims = spec.dims;
  cfg.reduced = spec.dims;  // no compression
  cfg.rank = 3;
  cfg.replicas = 1;
  cfg.shared = 3;
  cfg.seed = 12;
  RunMetrics metrics;
  const FactorTriple rec = decompose(TensorSource::from_tensor(*syn.tensor), cfg, metrics);
  const double pipeline_err = relative_error(*syn.tensor, rec);
  CHECK(pipeline_err <= std::max(2.0 * direct, 1e-9));
}

TEST_CASE("pipeline runs are deterministic") {
  SyntheticSpec spec;
  spec.dims = {30, 30, 30};
  spec.rank = 2;
  spec.seed = 21;
  const Synthetic syn = generate(spec);

  PipelineConfig cfg;
  cfg.dims = spec.dims;
  cfg.reduced = {10, 10, 10};
  cfg.rank = 2;
  cfg.seed = 22;
  cfg.deterministic = true;
  RunMetrics m1, m2;
  const FactorTriple r1 = decompose(TensorSource::from_tensor(*syn.tensor), cfg, m1);
  const FactorTriple r2 = decompose(TensorSource::from_tensor(*syn.tensor), cfg, m2);
  CHECK(r1.a.values == r2.a.values);
  CHECK(r1.b.values == r2.b.values);
  CHECK(r1.c.values == r2.c.values);
  CHECK(m1.config_hash == m2.config_hash);
  CHECK(m1.sample_mse == m2.sample_mse);
  REQUIRE(m1.stages.size() == m2.stages.size());
  for (std::size_t i = 0; i < m1.stages.size(); ++i)
    CHECK(m1.stages[i].status == m2.stages[i].status);
}

TEST_CASE("metrics carry every stage even when one fails") {
  Tensor3 poison(6, 6, 6);
  poison(0, 0, 0) = std::nan("");

  PipelineConfig cfg;
  cfg.dims = {6, 6, 6};
  cfg.reduced = {3, 3, 3};
  cfg.rank = 1;
  cfg.replicas = 2;
  cfg.shared = 1;
  RunMetrics metrics;
  CHECK_THROWS_AS(decompose(TensorSource::from_tensor(poison), cfg, metrics),
                  StageError);
  REQUIRE(metrics.stages.size() == 4);
  CHECK(metrics.stages[0].stage == "compression");
  CHECK(metrics.stages[0].status == "ok");
  CHECK(metrics.stages[1].stage == "decomposition");
  CHECK(metrics.stages[1].status == "error");
  CHECK(!metrics.stages[1].error.empty());
  CHECK(metrics.stages[2].status == "skipped");
  CHECK(metrics.stages[3].status == "skipped");

  const std::string jsonl = metrics_to_jsonl(metrics);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 5);  // 4 stages + summary
  CHECK(jsonl.find("\"error\"") != std::string::npos);
}

TEST_CASE("pipeline validates configuration") {
  const Tensor3 t = ts::random_tensor(6, 6, 6, 31);
  RunMetrics metrics;

  PipelineConfig bad;
  bad.dims = {6, 6, 6};
  bad.reduced = {7, 6, 6};
  bad.rank = 1;
  CHECK_THROWS_AS(decompose(TensorSource::from_tensor(t), bad, metrics), UsageError);

  PipelineConfig sparse_no_budget;
  sparse_no_budget.dims = {6, 6, 6};
  sparse_no_budget.reduced = {3, 3, 3};
  sparse_no_budget.rank = 1;
  sparse_no_budget.mode = PipelineConfig::Mode::sparse;
  CHECK_THROWS_AS(decompose(TensorSource::from_tensor(t), sparse_no_budget, metrics),
                  UsageError);

  PipelineConfig bad_shared;
  bad_shared.dims = {6, 6, 6};
  bad_shared.reduced = {3, 3, 3};
  bad_shared.rank = 1;
  bad_shared.shared = 4;
  CHECK_THROWS_AS(decompose(TensorSource::from_tensor(t), bad_shared, metrics),
                  UsageError);
}

TEST_CASE("pipeline warns about shaky configurations") {
  SyntheticSpec spec;
  spec.dims = {40, 40, 40};
  spec.rank = 2;
  spec.seed = 33;
  const Synthetic syn = generate(spec);

  SUBCASE("too few stacked rows for the dense solve") {
    PipelineConfig cfg;
    cfg.dims = spec.dims;
    cfg.reduced = {8, 8, 8};
    cfg.rank = 2;
    cfg.replicas = 3;  // 3*(8-4)+4 = 16 distinct rows < 40
    RunMetrics metrics;
    try {
      decompose(TensorSource::from_tensor(*syn.tensor), cfg, metrics);
    } catch (const StageError&) {
      // the solve itself may fail; the warning must be there either way
    }
    bool warned = false;
    for (const auto& w : metrics.warnings)
      if (w.find("distinct stacked rows") != std::string::npos) warned = true;
    CHECK(warned);
  }

  SUBCASE("reduced dims below twice the sparsity budget") {
    SyntheticSpec sp = spec;
    sp.law = SyntheticSpec::Law::sparse;
    sp.nnz_per_col = 3;
    const Synthetic ssyn = generate(sp, false);
    PipelineConfig cfg;
    cfg.dims = spec.dims;
    cfg.reduced = {5, 5, 5};
    cfg.rank = 2;
    cfg.mode = PipelineConfig::Mode::sparse;
    cfg.omp_sparsity = 3;  // 2*3 > 5
    cfg.replicas = 12;
    RunMetrics metrics;
    try {
      decompose(TensorSource::from_factors(ssyn.factors), cfg, metrics);
    } catch (const StageError&) {
    }
    bool warned = false;
    for (const auto& w : metrics.warnings)
      if (w.find("sparsity budget") != std::string::npos) warned = true;
    CHECK(warned);
  }

  SUBCASE("sampled block smaller than the rank") {
    SyntheticSpec spec3 = spec;
    spec3.rank = 3;
    const Synthetic syn3 = generate(spec3);
    PipelineConfig cfg;
    cfg.dims = spec.dims;
    cfg.reduced = {10, 10, 10};
    cfg.rank = 3;
    cfg.sample_b = 2;
    RunMetrics metrics;
    try {
      decompose(TensorSource::from_tensor(*syn3.tensor), cfg, metrics);
    } catch (const StageError&) {
      // a 2-row block may defeat the recovery; the warning is the contract
    }
    bool warned = false;
    for (const auto& w : metrics.warnings)
      if (w.find("fewer rows than the rank") != std::string::npos) warned = true;
    CHECK(warned);
  }
}

TEST_CASE("small dense pipeline recovers the factors") {
  SyntheticSpec spec;
  spec.dims = {40, 40, 40};
  spec.rank = 3;
  spec.seed = 41;
  const Synthetic syn = generate(spec);

  PipelineConfig cfg;
  cfg.dims = spec.dims;
  cfg.reduced = {12, 12, 12};
  cfg.rank = 3;
  cfg.seed = 42;
  RunMetrics metrics;
  const FactorTriple rec = decompose(TensorSource::from_tensor(*syn.tensor), cfg, metrics);
  const EvalReport rep = evaluate(syn.factors, rec);
  for (double e : rep.mode_rel_err) CHECK(e <= 1e-8);
  CHECK(rep.sample_mse <= 1e-12);
  CHECK(metrics.stages[3].status == "ok");
  CHECK(metrics.sample_mse >= 0.0);
}

TEST_CASE("small sparse pipeline recovers exact supports") {
  SyntheticSpec spec;
  spec.dims = {200, 200, 200};
  spec.rank = 3;
  spec.law = SyntheticSpec::Law::sparse;
  spec.nnz_per_col = 2;
  spec.seed = 51;
  const Synthetic syn = generate(spec, false);

  PipelineConfig cfg;
  cfg.dims = spec.dims;
  cfg.reduced = {20, 20, 20};
  cfg.rank = 3;
  cfg.mode = PipelineConfig::Mode::sparse;
  cfg.omp_sparsity = 2;
  cfg.seed = 52;
  RunMetrics metrics;
  const FactorTriple rec = decompose(TensorSource::from_factors(syn.factors), cfg, metrics);
  const EvalReport rep = evaluate(syn.factors, rec);

  const Matrix* truth[3] = {&syn.factors.a, &syn.factors.b, &syn.factors.c};
  const Matrix* got[3] = {&rep.aligned.a, &rep.aligned.b, &rep.aligned.c};
  for (int m = 0; m < 3; ++m) {
    for (index_t j = 0; j < 3; ++j)
      for (index_t i = 0; i < 200; ++i)
        CHECK(((*truth[m])(i, j) == 0.0) == ((*got[m])(i, j) == 0.0));
    CHECK(rep.mode_rel_err[m] <= 1e-8);
  }
}

TEST_CASE("small two-stage pipeline recovers sparse factors") {
  SyntheticSpec spec;
  spec.dims = {150, 150, 150};
  spec.rank = 2;
  spec.law = SyntheticSpec::Law::sparse;
  spec.nnz_per_col = 2;
  spec.seed = 61;
  const Synthetic syn = generate(spec, false);

  PipelineConfig cfg;
  cfg.dims = spec.dims;
  cfg.reduced = {25, 25, 25};
  cfg.rank = 2;
  cfg.mode = PipelineConfig::Mode::two_stage;
  cfg.omp_sparsity = 2;
  cfg.seed = 62;
  RunMetrics metrics;
  const FactorTriple rec = decompose(TensorSource::from_factors(syn.factors), cfg, metrics);
  const EvalReport rep = evaluate(syn.factors, rec);
  for (double e : rep.mode_rel_err) CHECK(e <= 1e-6);
}

TEST_CASE("mixed-precision pipeline completes with modest error") {
  SyntheticSpec spec;
  spec.dims = {24, 24, 24};
  spec.rank = 2;
  spec.seed = 71;
  const Synthetic syn = generate(spec);

  PipelineConfig cfg;
  cfg.dims = spec.dims;
  cfg.reduced = {8, 8, 8};
  cfg.rank = 2;
  cfg.precision = PipelineConfig::Precision::mixed;
  cfg.replica_fit_tol = 1e-3;  // replica fits are bounded by conversion noise
  cfg.seed = 72;
  RunMetrics metrics;
  const FactorTriple rec = decompose(TensorSource::from_tensor(*syn.tensor), cfg, metrics);
  const EvalReport rep = evaluate(syn.factors, rec);
  for (double e : rep.mode_rel_err) CHECK(e <= 1e-2);
}

TEST_CASE("evaluate resolves the global permutation and scaling ambiguity") {
  const FactorTriple truth(ts::random_matrix(10, 3, 81), ts::random_matrix(11, 3, 82),
                           ts::random_matrix(12, 3, 83));
  SUBCASE("identical factors evaluate to zero error") {
    const EvalReport rep = evaluate(truth, truth);
    for (double e : rep.mode_rel_err) CHECK(e <= 1e-13);
    CHECK(rep.sample_mse <= 1e-24);
  }
  SUBCASE("a permuted and rescaled copy evaluates to zero error") {
    PermScale ps;
    ps.perm = {2, 0, 1};
    ps.scale = {0.5, -3.0, 1.25};
    PermScale psb;
    psb.perm = ps.perm;
    psb.scale = {2.0, 0.25, -1.5};
    PermScale psc;  // make the mode scalings multiply to one per column
    psc.perm = ps.perm;
    psc.scale = {1.0 / (0.5 * 2.0), 1.0 / (-3.0 * 0.25), 1.0 / (1.25 * -1.5)};
    const FactorTriple moved(apply_forward(truth.a, ps), apply_forward(truth.b, psb),
                             apply_forward(truth.c, psc));
    const EvalReport rep = evaluate(truth, moved);
    for (double e : rep.mode_rel_err) CHECK(e <= 1e-12);
    CHECK(rep.sample_mse <= 1e-20);
  }
  SUBCASE("unrelated factors hit the variance ceiling") {
    const FactorTriple other(ts::random_matrix(10, 3, 91), ts::random_matrix(11, 3, 92),
                             ts::random_matrix(12, 3, 93));
    const EvalReport rep = evaluate(truth, other, 8);
    // entries of both tensors have variance ~ rank, so the difference has ~ 2R
    CHECK(rep.sample_mse >= 1.0);
    CHECK(rep.sample_mse <= 20.0);
  }
  SUBCASE("tensor truth reports the corner mse") {
    const EvalReport rep = evaluate(reconstruct(truth), truth, 6);
    CHECK(rep.sample_mse <= 1e-24);
    CHECK(rep.mode_rel_err[0] == -1.0);
  }
}

TEST_CASE("tensor files round-trip bitwise") {
  const std::string path = temp_path("xts_test_tensor.xts");
  const Tensor3 t = ts::random_tensor(5, 4, 3, 100);
  write_tensor_file(path, t);
  const TensorFile back = read_tensor_file(path);
  REQUIRE(back.kind == TensorFile::Kind::tensor);
  CHECK(back.tensor.n1 == 5);
  CHECK(back.tensor.values == t.values);

  // rewriting produces byte-identical files
  std::ifstream first(path, std::ios::binary);
  const std::string bytes1((std::istreambuf_iterator<char>(first)),
                           std::istreambuf_iterator<char>());
  write_tensor_file(path, t);
  std::ifstream second(path, std::ios::binary);
  const std::string bytes2((std::istreambuf_iterator<char>(second)),
                           std::istreambuf_iterator<char>());
  CHECK(bytes1 == bytes2);
  std::filesystem::remove(path);
}

TEST_CASE("factor files round-trip and malformed files are rejected") {
  const std::string path = temp_path("xts_test_factors.xts");
  const FactorTriple f(ts::random_matrix(5, 2, 101), ts::random_matrix(4, 2, 102),
                       ts::random_matrix(3, 2, 103));
  write_factor_file(path, f);
  const TensorFile back = read_tensor_file(path);
  REQUIRE(back.kind == TensorFile::Kind::factors);
  CHECK(back.factors.a.values == f.a.values);
  CHECK(back.factors.c.values == f.c.values);

  {
    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad << "NOTM";
  }
  CHECK_THROWS_AS(read_tensor_file(path), DataError);

  write_factor_file(path, f);
  {
    std::fstream corrupt(path, std::ios::binary | std::ios::in | std::ios::out);
    corrupt.seekp(6);  // the kind byte
    const char kind = 9;
    corrupt.write(&kind, 1);
  }
  CHECK_THROWS_AS(read_tensor_file(path), DataError);

  write_factor_file(path, f);
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(read_tensor_file(path), DataError);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(read_tensor_file(temp_path("xts_no_such_file.xts")), DataError);
}

TEST_CASE("metrics serialize one json object per stage plus a summary") {
  RunMetrics m;
  m.seed = 9;
  m.config_echo = "config";
  m.config_hash = fnv1a_hex(m.config_echo);
  m.stages = {{"compression", 0.25, "ok", ""}, {"decomposition", 0.5, "error", "boom"}};
  m.replicas_total = 4;
  m.replicas_dropped = 1;
  m.sample_mse = 0.125;
  const std::string jsonl = metrics_to_jsonl(m);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 3);
  CHECK(jsonl.find("\"stage\":\"compression\"") != std::string::npos);
  CHECK(jsonl.find("\"error\":\"boom\"") != std::string::npos);
  CHECK(jsonl.find("\"stage\":\"summary\"") != std::string::npos);
  CHECK(jsonl.find("\"replicas_dropped\":1") != std::string::npos);
}

TEST_CASE("worker caps respect the environment") {
  setenv("XTS_THREADS", "1", 1);
  CHECK(effective_workers(8) == 1);
  setenv("XTS_THREADS", "4", 1);
  CHECK(effective_workers(2) == 2);
  CHECK(effective_workers(999) == 4);
  unsetenv("XTS_THREADS");
  CHECK(effective_workers(3) == 3);
}
