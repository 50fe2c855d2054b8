#include "test_support.hpp"

#include <Eigen/Dense>

#include "xts/half.hpp"
#include "xts/linalg.hpp"

namespace xts::testsupport {

Matrix low_coherence_dictionary(index_t rows, index_t atoms, std::uint64_t seed,
                                int iters) {
  auto mu_of = [&](const Eigen::MatrixXd& m) {
    double mu = 0.0;
    for (index_t a = 0; a < atoms; ++a)
      for (index_t b = a + 1; b < atoms; ++b)
        mu = std::max(mu, std::fabs(m.col(a).dot(m.col(b))));
    return mu;
  };

  Eigen::MatrixXd best;
  double best_mu = 2.0;
  std::vector<double> mags;
  for (int restart = 0; restart < 4; ++restart) {
    Eigen::MatrixXd d(rows, atoms);
    Rng rng(seed + 7919ull * static_cast<std::uint64_t>(restart));
    for (index_t j = 0; j < atoms; ++j)
      for (index_t i = 0; i < rows; ++i) d(i, j) = rng.normal();
    for (index_t j = 0; j < atoms; ++j) d.col(j).normalize();

    for (int it = 0; it < iters; ++it) {
      Eigen::MatrixXd g = d.transpose() * d;
      mags.clear();
      for (index_t a = 0; a < atoms; ++a)
        for (index_t b = 0; b < atoms; ++b)
          if (a != b) mags.push_back(std::fabs(g(a, b)));
      std::sort(mags.begin(), mags.end());
      const double t = mags[static_cast<std::size_t>(mags.size() * 0.6)];
      for (index_t a = 0; a < atoms; ++a)
        for (index_t b = 0; b < atoms; ++b)
          if (a != b && std::fabs(g(a, b)) > t) g(a, b) *= 0.9;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
      const Eigen::VectorXd ev =
          eig.eigenvalues().tail(rows).cwiseMax(0.0).cwiseSqrt();
      d = ev.asDiagonal() * eig.eigenvectors().rightCols(rows).transpose();
      for (index_t j = 0; j < atoms; ++j) {
        const double n = d.col(j).norm();
        if (n > 0.0) d.col(j) /= n;
      }
      const double mu = mu_of(d);
      if (mu < best_mu) {
        best_mu = mu;
        best = d;
      }
    }
    // a run that already hugs the packing floor will not be beaten
    if (best_mu < 0.36) break;
  }

  Matrix out(rows, atoms);
  for (index_t j = 0; j < atoms; ++j)
    for (index_t i = 0; i < rows; ++i) out(i, j) = best(i, j);
  return out;
}

std::vector<index_t> best_support_exhaustive(const Matrix& dictionary,
                                             const std::vector<double>& y, int k) {
  const index_t atoms = dictionary.cols;
  std::vector<index_t> best;
  double best_res = 1e300;
  std::vector<index_t> idx(static_cast<std::size_t>(k));
  Eigen::VectorXd yv(dictionary.rows);
  for (index_t i = 0; i < dictionary.rows; ++i) yv(i) = y[static_cast<std::size_t>(i)];

  std::function<void(index_t, int)> visit = [&](index_t start, int depth) {
    if (depth == k) {
      Eigen::MatrixXd ds(dictionary.rows, k);
      for (int q = 0; q < k; ++q)
        for (index_t i = 0; i < dictionary.rows; ++i)
          ds(i, q) = dictionary(i, idx[static_cast<std::size_t>(q)]);
      const Eigen::VectorXd c = ds.colPivHouseholderQr().solve(yv);
      const double res = (yv - ds * c).norm();
      if (res < best_res) {
        best_res = res;
        best = idx;
      }
      return;
    }
    for (index_t a = start; a < atoms; ++a) {
      idx[static_cast<std::size_t>(depth)] = a;
      visit(a + 1, depth + 1);
    }
  };
  visit(0, 0);
  std::sort(best.begin(), best.end());
  return best;
}

std::uint16_t half_bits_oracle(double x, bool& overflow) {
  // All finite nonnegative halves, in increasing order by construction.
  static const std::vector<double>& table = [] {
    static std::vector<double> t;
    for (std::uint16_t bits = 0; bits < 0x7c00; ++bits)
      t.push_back(half_bits_to_double(bits));
    return t;
  }();

  overflow = false;
  const bool negative = std::signbit(x);
  const double mag = std::fabs(x);

  // 65520 is the midpoint between the largest half and 2^16; the tie goes to
  // the even (larger) side, so anything from the midpoint up overflows.
  if (mag >= 65520.0) {
    overflow = true;
    return 0;
  }

  auto it = std::lower_bound(table.begin(), table.end(), mag);
  std::uint16_t bits;
  if (it == table.end()) {
    bits = 0x7bff;
  } else if (*it == mag) {
    bits = static_cast<std::uint16_t>(it - table.begin());
  } else if (it == table.begin()) {
    bits = 0;
  } else {
    const std::uint16_t hi = static_cast<std::uint16_t>(it - table.begin());
    const std::uint16_t lo = hi - 1;
    const double dlo = mag - table[lo];
    const double dhi = table[hi] - mag;
    if (dlo < dhi)
      bits = lo;
    else if (dhi < dlo)
      bits = hi;
    else
      bits = (lo & 1) == 0 ? lo : hi;  // tie: even mantissa wins
  }
  return static_cast<std::uint16_t>(bits | (negative ? 0x8000 : 0));
}

}  // namespace xts::testsupport
