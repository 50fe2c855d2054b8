#include "xts/linalg.hpp"

#include <Eigen/Dense>
#include <string>

#include "xts/errors.hpp"

namespace xts {

namespace {

using EigenMap = Eigen::Map<const Eigen::MatrixXd>;

EigenMap map_of(const Matrix& m) { return EigenMap(m.values.data(), m.rows, m.cols); }

Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  Eigen::Map<Eigen::MatrixXd>(m.values.data(), m.rows, m.cols) = e;
  return m;
}

}  // namespace

Matrix gemm(const Matrix& a, const Matrix& b, bool transpose_a, bool transpose_b) {
  const index_t ar = transpose_a ? a.cols : a.rows;
  const index_t ac = transpose_a ? a.rows : a.cols;
  const index_t br = transpose_b ? b.cols : b.rows;
  const index_t bc = transpose_b ? b.rows : b.cols;
  if (ac != br)
    throw UsageError("gemm: inner dimensions differ (" + std::to_string(ac) +
                     " vs " + std::to_string(br) + ")");
  Matrix out(ar, bc);
  Eigen::Map<Eigen::MatrixXd> o(out.values.data(), ar, bc);
  if (!transpose_a && !transpose_b)
    o.noalias() = map_of(a) * map_of(b);
  else if (transpose_a && !transpose_b)
    o.noalias() = map_of(a).transpose() * map_of(b);
  else if (!transpose_a && transpose_b)
    o.noalias() = map_of(a) * map_of(b).transpose();
  else
    o.noalias() = map_of(a).transpose() * map_of(b).transpose();
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (index_t j = 0; j < m.cols; ++j)
    for (index_t i = 0; i < m.rows; ++i) out(j, i) = m(i, j);
  return out;
}

Matrix pseudo_inverse(const Matrix& m, double rcond) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(map_of(m),
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rcond * sv(0) : 0.0;
  Eigen::VectorXd inv_sv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    inv_sv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
  return from_eigen(svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose());
}

Matrix leading_left_singular_vectors(const Matrix& m, index_t count) {
  if (count < 1 || count > m.rows)
    throw UsageError("leading_left_singular_vectors: count out of range");
  const EigenMap x = map_of(m);
  const Eigen::MatrixXd gram = x * x.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  Matrix out(m.rows, count);
  for (index_t j = 0; j < count; ++j)
    for (index_t i = 0; i < m.rows; ++i)
      out(i, j) = eig.eigenvectors()(i, m.rows - 1 - j);  // descending order
  return out;
}

Matrix solve_least_squares(const Matrix& a, const Matrix& rhs) {
  if (a.rows != rhs.rows)
    throw UsageError("solve_least_squares: row counts differ");
  if (a.rows < a.cols)
    throw IllPosedError("solve_least_squares: underdetermined system (" +
                            std::to_string(a.rows) + " rows < " +
                            std::to_string(a.cols) + " cols)",
                        std::min(a.rows, a.cols));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(map_of(a));
  const index_t rank = static_cast<index_t>(qr.rank());
  if (rank < a.cols)
    throw IllPosedError("solve_least_squares: rank-deficient system (rank " +
                            std::to_string(rank) + " of " +
                            std::to_string(a.cols) + ")",
                        rank);
  return from_eigen(qr.solve(map_of(rhs)));
}

}  // namespace xts
