#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xts/alignment.hpp"
#include "xts/compression.hpp"
#include "xts/cp_als.hpp"
#include "xts/errors.hpp"
#include "xts/half.hpp"
#include "xts/io.hpp"
#include "xts/linalg.hpp"
#include "xts/metrics.hpp"
#include "xts/mixed.hpp"
#include "xts/pipeline.hpp"
#include "xts/rng.hpp"
#include "xts/tensor.hpp"

namespace {

using namespace xts;

struct GenArgs {
  std::vector<index_t> dims;
  index_t rank = 1;
  std::string mode = "dense";
  index_t sparsity = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string factors_out;
  bool factored = false;
  std::uint64_t budget_mb = kDefaultMemoryBudget >> 20;
};

int run_gen(const GenArgs& a) {
  SyntheticSpec spec;
  spec.dims = {a.dims[0], a.dims[1], a.dims[2]};
  spec.rank = a.rank;
  spec.law = a.mode == "sparse" ? SyntheticSpec::Law::sparse : SyntheticSpec::Law::dense;
  spec.nnz_per_col = a.sparsity;
  spec.seed = a.seed;
  const Synthetic syn = generate(spec, !a.factored, a.budget_mb << 20);
  if (a.factored)
    write_factor_file(a.out, syn.factors);
  else
    write_tensor_file(a.out, *syn.tensor);
  if (!a.factors_out.empty()) write_factor_file(a.factors_out, syn.factors);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

struct DecomposeArgs {
  std::string in;
  std::vector<index_t> reduced;
  index_t rank = 1;
  index_t replicas = 0;
  bool auto_replicas = false;
  index_t slack = 10;
  index_t shared = 0;
  std::vector<index_t> block;
  std::string mode = "dense";
  double alpha = 1.6, beta = 1.6, gamma = 1.6;
  index_t sparsity = 0;
  std::string precision = "full";
  std::uint64_t seed = 0;
  bool deterministic = false;
  index_t sample_b = 0;
  std::string out;
  std::string metrics_path;
};

int run_decompose(const DecomposeArgs& a) {
  const TensorFile file = read_tensor_file(a.in);
  const TensorSource source = file.kind == TensorFile::Kind::tensor
                                  ? TensorSource::from_tensor(file.tensor)
                                  : TensorSource::from_factors(file.factors);

  PipelineConfig cfg;
  cfg.dims = source.dims();
  cfg.reduced = {a.reduced[0], a.reduced[1], a.reduced[2]};
  cfg.rank = a.rank;
  cfg.replicas = a.auto_replicas ? 0 : a.replicas;
  cfg.slack = a.slack;
  cfg.shared = a.shared;
  if (!a.block.empty()) cfg.block = {a.block[0], a.block[1], a.block[2]};
  cfg.mode = a.mode == "sparse"      ? PipelineConfig::Mode::sparse
             : a.mode == "two-stage" ? PipelineConfig::Mode::two_stage
                                     : PipelineConfig::Mode::dense;
  cfg.alpha = a.alpha;
  cfg.beta = a.beta;
  cfg.gamma = a.gamma;
  cfg.omp_sparsity = a.sparsity;
  cfg.sample_b = a.sample_b;
  cfg.precision = a.precision == "mixed" ? PipelineConfig::Precision::mixed
                                         : PipelineConfig::Precision::full;
  cfg.seed = a.seed;
  cfg.deterministic = a.deterministic;

  RunMetrics metrics;
  try {
    const FactorTriple recovered = decompose(source, cfg, metrics);
    if (!a.metrics_path.empty()) append_metrics_jsonl(metrics, a.metrics_path);
    std::filesystem::create_directories(a.out);
    write_factor_file((std::filesystem::path(a.out) / "factors.xts").string(), recovered);
    std::cout << "wrote " << (std::filesystem::path(a.out) / "factors.xts").string()
              << "\n";
    return 0;
  } catch (...) {
    if (!a.metrics_path.empty()) append_metrics_jsonl(metrics, a.metrics_path);
    throw;
  }
}

struct EvalArgs {
  std::string truth;
  std::string in;
  index_t sample = 0;
  std::string metrics_path;
};

int run_eval(const EvalArgs& a) {
  const TensorFile truth = read_tensor_file(a.truth);
  const TensorFile rec = read_tensor_file(a.in);
  if (rec.kind != TensorFile::Kind::factors)
    throw UsageError("eval: --in must be a factor file");
  const EvalReport rep = truth.kind == TensorFile::Kind::factors
                             ? evaluate(truth.factors, rec.factors, a.sample)
                             : evaluate(truth.tensor, rec.factors, a.sample);
  nlohmann::json j{{"stage", "eval"},
                   {"sample_mse", rep.sample_mse},
                   {"sample_size", rep.sample_size}};
  if (rep.mode_rel_err[0] >= 0.0) j["mode_rel_err"] = rep.mode_rel_err;
  std::cout << j.dump() << "\n";
  if (!a.metrics_path.empty()) {
    std::ofstream out(a.metrics_path, std::ios::app);
    if (!out) throw DataError("cannot open metrics file: " + a.metrics_path);
    out << j.dump() << "\n";
  }
  return 0;
}

// ---- selftest: quick self-contained oracle checks ----

bool report(const char* name, bool ok) {
  std::printf("%s %s\n", ok ? "PASS" : "FAIL", name);
  return ok;
}

Tensor3 random_tensor(index_t n1, index_t n2, index_t n3, std::uint64_t seed) {
  Tensor3 t(n1, n2, n3);
  Rng rng(seed);
  for (double& v : t.values) v = rng.normal();
  return t;
}

bool check_comp_oracle() {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Tensor3 t = random_tensor(5, 4, 3, 100 + seed);
    const Matrix u = gen_gaussian(2, 5, 200 + seed);
    const Matrix v = gen_gaussian(2, 4, 300 + seed);
    const Matrix w = gen_gaussian(2, 3, 400 + seed);
    const Tensor3 y = comp(t, u, v, w);
    for (index_t l = 0; l < 2; ++l)
      for (index_t m = 0; m < 2; ++m)
        for (index_t n = 0; n < 2; ++n) {
          double acc = 0.0;
          for (index_t i = 0; i < 5; ++i)
            for (index_t j = 0; j < 4; ++j)
              for (index_t k = 0; k < 3; ++k)
                acc += u(l, i) * v(m, j) * w(n, k) * t(i, j, k);
          if (std::fabs(acc - y(l, m, n)) > 1e-10) return false;
        }
  }
  return true;
}

bool check_blocked() {
  const Tensor3 t = random_tensor(8, 8, 8, 7);
  const auto ensemble = make_ensemble({8, 8, 8}, {3, 3, 3}, 2, 1, {}, 9);
  const Tensor3 direct = comp(t, ensemble.u[0], ensemble.v[0], ensemble.w[0]);
  for (std::array<index_t, 3> bd : {std::array<index_t, 3>{4, 4, 4},
                                    std::array<index_t, 3>{3, 3, 2}}) {
    const BlockGrid grid({8, 8, 8}, bd);
    const auto reps = comp_blocked(grid, make_memory_block_source(t, grid), ensemble, true);
    if (reps[0].values != direct.values) return false;
  }
  return true;
}

bool check_two_stage_identity() {
  const Tensor3 t = random_tensor(12, 10, 9, 17);
  const Matrix u1 = gen_gaussian(8, 12, 1), u2 = gen_gaussian(5, 8, 2);
  const Matrix v1 = gen_gaussian(7, 10, 3), v2 = gen_gaussian(5, 7, 4);
  const Matrix w1 = gen_gaussian(6, 9, 5), w2 = gen_gaussian(5, 6, 6);
  const Tensor3 once = comp(t, gemm(u2, u1), gemm(v2, v1), gemm(w2, w1));
  const Tensor3 twice = comp(comp(t, u1, v1, w1), u2, v2, w2);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < once.values.size(); ++i) {
    const double d = once.values[i] - twice.values[i];
    num += d * d;
    den += once.values[i] * once.values[i];
  }
  return std::sqrt(num) <= 1e-9 * std::sqrt(den);
}

bool check_hungarian() {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Matrix q(4, 4);
    Rng rng(1000 + seed);
    for (double& v : q.values) v = rng.normal();
    const auto got = max_trace_assignment(q);
    std::vector<index_t> perm{0, 1, 2, 3};
    double best = -1e300;
    std::vector<index_t> best_perm;
    do {
      double s = 0.0;
      for (int r = 0; r < 4; ++r) s += q(r, perm[static_cast<std::size_t>(r)]);
      if (s > best) {
        best = s;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (got != best_perm) return false;
  }
  return true;
}

bool check_omp() {
  const Matrix eye = Matrix::identity(6);
  Matrix y(6, 2);
  y(1, 0) = 2.0;
  y(4, 1) = -3.0;
  OmpConfig cfg;
  cfg.sparsity = 2;
  const Matrix x = omp_recover(y, eye, cfg);
  return std::fabs(x(1, 0) - 2.0) < 1e-12 && std::fabs(x(4, 1) + 3.0) < 1e-12;
}

bool check_half() {
  const struct {
    double in;
    std::uint16_t bits;
  } table[] = {{1.0, 0x3C00}, {1.5, 0x3E00}, {-2.0, 0xC000}, {65504.0, 0x7BFF},
               {0.0999755859375, 0x2E66}, {5.960464477539063e-08, 0x0001}};
  for (const auto& row : table) {
    if (double_to_half_bits(row.in) != row.bits) return false;
    if (half_bits_to_double(row.bits) != row.in) return false;
  }
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.normal();
    const SplitValue s = fp16_split(x);
    if (s.half + s.residual != x) return false;
  }
  return true;
}

bool check_stacked_ls() {
  const Matrix g = gen_gaussian(12, 3, 77);
  std::vector<Matrix> us, fs;
  for (int p = 0; p < 4; ++p) {
    us.push_back(gen_gaussian(5, 12, 80 + static_cast<std::uint64_t>(p)));
    fs.push_back(gemm(us.back(), g));
  }
  const Matrix sol = solve_stacked_ls(fs, us);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < sol.values.size(); ++i) {
    const double d = sol.values[i] - g.values[i];
    num += d * d;
    den += g.values[i] * g.values[i];
  }
  return std::sqrt(num / den) <= 1e-9;
}

bool check_als() {
  const Synthetic syn = generate({{6, 6, 6}, 1, SyntheticSpec::Law::dense, 0, 3});
  AlsConfig cfg;
  cfg.rank = 1;
  cfg.seed = 4;
  const AlsResult r = cp_als(*syn.tensor, cfg);
  return r.converged && r.final_error() <= 1e-10;
}

int run_selftest() {
  bool ok = true;
  ok &= report("compression matches elementwise contraction", check_comp_oracle());
  ok &= report("blocked compression equals one-shot bitwise", check_blocked());
  ok &= report("two-stage compression composes", check_two_stage_identity());
  ok &= report("assignment solver matches exhaustive search", check_hungarian());
  ok &= report("matching pursuit on identity dictionary", check_omp());
  ok &= report("binary16 rounding, table and split round trip", check_half());
  ok &= report("stacked least squares recovers the forward model", check_stacked_ls());
  ok &= report("als fits an exact rank-1 tensor", check_als());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compression-based CP decomposition toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* cgen = app.add_subcommand("gen", "generate a synthetic tensor or factor file");
  cgen->add_option("--dims", gen.dims, "tensor dims I J K")->expected(3)->required();
  cgen->add_option("--rank", gen.rank, "CP rank")->required();
  cgen->add_option("--mode", gen.mode, "dense|sparse")
      ->check(CLI::IsMember({"dense", "sparse"}));
  cgen->add_option("--sparsity", gen.sparsity, "nonzeros per factor column (sparse)");
  cgen->add_option("--seed", gen.seed, "RNG seed");
  cgen->add_option("--out", gen.out, "output .xts path")->required();
  cgen->add_option("--factors-out", gen.factors_out, "also write the factor triple");
  cgen->add_flag("--factored", gen.factored, "write factors instead of a tensor");
  cgen->add_option("--mem-budget-mb", gen.budget_mb, "materialization budget (MiB)");

  DecomposeArgs dec;
  CLI::App* cdec = app.add_subcommand("decompose", "run the full decomposition pipeline");
  cdec->add_option("--in", dec.in, "input .xts (tensor or factor triple)")->required();
  cdec->add_option("--reduced", dec.reduced, "replica dims L M N")->expected(3)->required();
  cdec->add_option("--rank", dec.rank, "CP rank")->required();
  auto* rep_opt = cdec->add_option("--replicas", dec.replicas, "replica count P");
  cdec->add_flag("--auto-replicas", dec.auto_replicas, "derive P from the dims")
      ->excludes(rep_opt);
  cdec->add_option("--slack", dec.slack, "extra replicas beyond the bound");
  cdec->add_option("--shared", dec.shared, "shared anchor rows S (default 2R)");
  cdec->add_option("--block", dec.block, "block dims D1 D2 D3")->expected(3);
  cdec->add_option("--mode", dec.mode, "dense|sparse|two-stage")
      ->check(CLI::IsMember({"dense", "sparse", "two-stage"}));
  cdec->add_option("--alpha", dec.alpha, "two-stage inflation for mode 1");
  cdec->add_option("--beta", dec.beta, "two-stage inflation for mode 2");
  cdec->add_option("--gamma", dec.gamma, "two-stage inflation for mode 3");
  cdec->add_option("--sparsity", dec.sparsity, "OMP nonzero budget per column");
  cdec->add_option("--precision", dec.precision, "full|mixed")
      ->check(CLI::IsMember({"full", "mixed"}));
  cdec->add_option("--seed", dec.seed, "RNG seed");
  cdec->add_flag("--deterministic", dec.deterministic, "bit-reproducible mode");
  cdec->add_option("--sample", dec.sample_b, "sampled block rows per mode");
  cdec->add_option("--out", dec.out, "output directory for factors.xts")->required();
  cdec->add_option("--metrics", dec.metrics_path, "append JSONL metrics here");

  EvalArgs ev;
  CLI::App* ceval = app.add_subcommand("eval", "compare recovered factors with the truth");
  ceval->add_option("--truth", ev.truth, "truth .xts (tensor or factors)")->required();
  ceval->add_option("--in", ev.in, "recovered factor .xts")->required();
  ceval->add_option("--sample", ev.sample, "sample block size");
  ceval->add_option("--metrics", ev.metrics_path, "append the report here");

  CLI::App* cself = app.add_subcommand("selftest", "run the built-in oracle checks");

  try {
    app.parse(argc, argv);
    if (cgen->parsed()) return run_gen(gen);
    if (cdec->parsed()) return run_decompose(dec);
    if (ceval->parsed()) return run_eval(ev);
    if (cself->parsed()) return run_selftest();
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
