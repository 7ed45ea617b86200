#include "sbart/linalg.hpp"

#include <cassert>
#include <cmath>

namespace sbart {

SpdMatrix chol_product(const CholFactor& q) {
  const Matrix& m = q.matrix();
  const int p = q.dim();
  Matrix lam(p, p);
  // lambda_jk = sum_{t<=k} q_jt q_kt for j >= k. The t<k partial sum uses the
  // same expression as constrained_entry so forced zeros cancel exactly.
  for (int k = 0; k < p; ++k)
    for (int j = k; j < p; ++j)
      lam(j, k) = m.row(j).head(k).dot(m.row(k).head(k)) + m(j, k) * m(k, k);
  return SpdMatrix::from_lower(lam);
}

CholFactor cholesky(const SpdMatrix& m) {
  Eigen::LLT<Matrix> llt(m.matrix());
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("cholesky: matrix is not positive definite");
  return CholFactor(Matrix(llt.matrixL()));
}

double constrained_entry(const Matrix& q, double q_kk, int j, int k) {
  assert(k >= 0 && k < j && j < q.rows());
  assert(q_kk > 0.0);
  if (k == 0) return 0.0;
  return -q.row(j).head(k).dot(q.row(k).head(k)) / q_kk;
}

SparsityPattern pattern_of(const SpdMatrix& m, double tol) {
  if (tol < 0.0) throw ValidationError("pattern_of: tolerance must be non-negative");
  const int p = m.dim();
  const double scale = m.matrix().diagonal().maxCoeff();
  SparsityPattern z(p);
  for (int k = 0; k < p; ++k)
    for (int j = k + 1; j < p; ++j)
      if (std::abs(m(j, k)) > tol * scale) z.set(j, k, true);
  return z;
}

}  // namespace sbart
