#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "xts/errors.hpp"
#include "xts/linalg.hpp"
#include "xts/tensor.hpp"

using namespace xts;
namespace ts = xts::testsupport;

namespace {

Tensor3 counting_tensor() {
  // t(i,j,k) = 1 + i + 2j + 4k
  Tensor3 t(2, 2, 2);
  for (index_t k = 0; k < 2; ++k)
    for (index_t j = 0; j < 2; ++j)
      for (index_t i = 0; i < 2; ++i) t(i, j, k) = 1.0 + i + 2.0 * j + 4.0 * k;
  return t;
}

}  // namespace

TEST_CASE("matricize definitional unfoldings") {
  const Tensor3 t = counting_tensor();

  const Matrix m1 = matricize(t, 1);
  REQUIRE(m1.rows == 2);
  REQUIRE(m1.cols == 4);
  const double want1[2][4] = {{1, 3, 5, 7}, {2, 4, 6, 8}};
  for (index_t i = 0; i < 2; ++i)
    for (index_t j = 0; j < 4; ++j) CHECK(m1(i, j) == want1[i][j]);

  const Matrix m2 = matricize(t, 2);
  const double want2[2][4] = {{1, 2, 5, 6}, {3, 4, 7, 8}};
  for (index_t i = 0; i < 2; ++i)
    for (index_t j = 0; j < 4; ++j) CHECK(m2(i, j) == want2[i][j]);

  const Matrix m3 = matricize(t, 3);
  const double want3[2][4] = {{1, 2, 3, 4}, {5, 6, 7, 8}};
  for (index_t i = 0; i < 2; ++i)
    for (index_t j = 0; j < 4; ++j) CHECK(m3(i, j) == want3[i][j]);
}

TEST_CASE("matricize of a singleton tensor") {
  Tensor3 t(1, 1, 1);
  t(0, 0, 0) = 42.0;
  for (int mode = 1; mode <= 3; ++mode) {
    const Matrix m = matricize(t, mode);
    CHECK(m.rows == 1);
    CHECK(m.cols == 1);
    CHECK(m(0, 0) == 42.0);
  }
}

TEST_CASE("matricize rejects bad modes") {
  const Tensor3 t(2, 2, 2);
  CHECK_THROWS_AS(matricize(t, 0), UsageError);
  CHECK_THROWS_AS(matricize(t, 4), UsageError);
}

TEST_CASE("unfolding round-trips exactly for all modes and small dims") {
  std::uint64_t seed = 11;
  for (index_t n1 : {1, 3, 6})
    for (index_t n2 : {2, 5})
      for (index_t n3 : {1, 4, 6}) {
        const Tensor3 t = ts::random_tensor(n1, n2, n3, seed++);
        for (int mode = 1; mode <= 3; ++mode) {
          const Tensor3 back = fold(matricize(t, mode), mode, n1, n2, n3);
          CHECK(back.values == t.values);
        }
      }
}

TEST_CASE("khatri-rao single columns") {
  Matrix a(2, 1), b(2, 1);
  a(0, 0) = 1;
  a(1, 0) = 2;
  b(0, 0) = 3;
  b(1, 0) = 4;
  const Matrix kr = khatri_rao(a, b);
  REQUIRE(kr.rows == 4);
  const double want[4] = {3, 4, 6, 8};
  for (index_t i = 0; i < 4; ++i) CHECK(kr(i, 0) == want[i]);
}

TEST_CASE("khatri-rao of identities gives unit columns") {
  const Matrix kr = khatri_rao(Matrix::identity(2), Matrix::identity(2));
  CHECK(kr(0, 0) == 1.0);
  CHECK(kr(3, 1) == 1.0);
  double sum = 0.0;
  for (double v : kr.values) sum += std::fabs(v);
  CHECK(sum == 2.0);
}

TEST_CASE("khatri-rao matches the per-column kronecker oracle") {
  const Matrix a = ts::random_matrix(3, 2, 21);
  const Matrix b = ts::random_matrix(4, 2, 22);
  const Matrix kr = khatri_rao(a, b);
  for (index_t r = 0; r < 2; ++r)
    for (index_t ia = 0; ia < 3; ++ia)
      for (index_t ib = 0; ib < 4; ++ib)
        CHECK(kr(ia * 4 + ib, r) == a(ia, r) * b(ib, r));
}

TEST_CASE("khatri-rao rejects mismatched column counts") {
  CHECK_THROWS_AS(khatri_rao(Matrix(2, 2), Matrix(2, 3)), UsageError);
}

TEST_CASE("kron matches the elementwise definition") {
  const Matrix a = ts::random_matrix(2, 3, 31);
  const Matrix b = ts::random_matrix(3, 2, 32);
  const Matrix k = kron(a, b);
  REQUIRE(k.rows == 6);
  REQUIRE(k.cols == 6);
  for (index_t ia = 0; ia < 2; ++ia)
    for (index_t ja = 0; ja < 3; ++ja)
      for (index_t ib = 0; ib < 3; ++ib)
        for (index_t jb = 0; jb < 2; ++jb)
          CHECK(k(ia * 3 + ib, ja * 2 + jb) == a(ia, ja) * b(ib, jb));
}

TEST_CASE("hadamard product and shape checks") {
  const Matrix a = ts::random_matrix(3, 3, 41);
  const Matrix b = ts::random_matrix(3, 3, 42);
  const Matrix h = hadamard(a, b);
  for (std::size_t i = 0; i < h.values.size(); ++i)
    CHECK(h.values[i] == a.values[i] * b.values[i]);
  CHECK_THROWS_AS(hadamard(a, Matrix(2, 3)), UsageError);
}

TEST_CASE("reconstruct rank-1 outer product") {
  Matrix a(2, 1), b(2, 1), c(2, 1);
  a(0, 0) = 1;
  a(1, 0) = 2;
  b(0, 0) = 1;
  b(1, 0) = 1;
  c(0, 0) = 1;
  c(1, 0) = 0;
  const Tensor3 t = reconstruct(FactorTriple(a, b, c));
  for (index_t i = 0; i < 2; ++i)
    for (index_t j = 0; j < 2; ++j) {
      CHECK(t(i, j, 0) == a(i, 0));
      CHECK(t(i, j, 1) == 0.0);
    }
  CHECK(t.values == outer3({1, 2}, {1, 1}, {1, 0}).values);
}

TEST_CASE("reconstruct rejects rank zero") {
  CHECK_THROWS_AS(reconstruct(FactorTriple(Matrix(2, 0), Matrix(2, 0), Matrix(2, 0))),
                  UsageError);
}

TEST_CASE("reconstruct matches the triple-loop sum") {
  const FactorTriple f(ts::random_matrix(4, 3, 51), ts::random_matrix(5, 3, 52),
                       ts::random_matrix(6, 3, 53));
  const Tensor3 t = reconstruct(f);
  for (index_t i = 0; i < 4; ++i)
    for (index_t j = 0; j < 5; ++j)
      for (index_t k = 0; k < 6; ++k) {
        double acc = 0.0;
        for (index_t r = 0; r < 3; ++r) acc += f.a(i, r) * f.b(j, r) * f.c(k, r);
        CHECK(std::fabs(t(i, j, k) - acc) <= 1e-12);
      }
}

TEST_CASE("mode-1 unfolding of a CP model equals a * khatri_rao(c, b)^T") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const index_t r = 1 + static_cast<index_t>(seed);
    const FactorTriple f(ts::random_matrix(7, r, 60 + seed),
                         ts::random_matrix(8, r, 70 + seed),
                         ts::random_matrix(5, r, 80 + seed));
    const Matrix lhs = matricize(reconstruct(f), 1);
    const Matrix rhs = gemm(f.a, khatri_rao(f.c, f.b), false, true);
    CHECK(ts::max_abs_diff(lhs.values, rhs.values) <= 1e-12);
  }
}

TEST_CASE("vec of a CP model equals the full khatri-rao times ones") {
  const FactorTriple f(ts::random_matrix(3, 2, 91), ts::random_matrix(4, 2, 92),
                       ts::random_matrix(5, 2, 93));
  const Tensor3 t = reconstruct(f);
  const Matrix big = khatri_rao(khatri_rao(f.c, f.b), f.a);
  for (index_t i = 0; i < t.size(); ++i) {
    double acc = 0.0;
    for (index_t r = 0; r < 2; ++r) acc += big(i, r);
    CHECK(std::fabs(t.values[static_cast<std::size_t>(i)] - acc) <= 1e-12);
  }
}

TEST_CASE("mse basics and oracle") {
  const Tensor3 x = ts::random_tensor(3, 4, 2, 101);
  CHECK(mse(x, x) == 0.0);

  Tensor3 zeros(2, 2, 2), ones(2, 2, 2);
  for (double& v : ones.values) v = 1.0;
  CHECK(mse(zeros, ones) == 1.0);

  const Tensor3 y = ts::random_tensor(3, 4, 2, 102);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    const double d = x.values[i] - y.values[i];
    acc += d * d;
  }
  CHECK(mse(x, y) == doctest::Approx(acc / 24.0).epsilon(1e-14));

  CHECK_THROWS_AS(mse(x, Tensor3(3, 4, 3)), UsageError);
}

TEST_CASE("factor triple validates column agreement") {
  CHECK_THROWS_AS(FactorTriple(Matrix(2, 2), Matrix(2, 3), Matrix(2, 2)), UsageError);
}
