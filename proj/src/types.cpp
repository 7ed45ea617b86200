#include "sbart/types.hpp"

#include <cmath>

namespace sbart {

SparsityPattern::SparsityPattern(int p) : p_(p) {
  if (p <= 0) throw ValidationError("SparsityPattern: dimension must be positive");
  base_.resize(p);
  int off = 0;
  for (int k = 0; k < p; ++k) {
    base_[k] = off;
    off += p - 1 - k;
  }
  low_.assign(off, 0);
  zcount_.assign(p, 0);
}

SparsityPattern SparsityPattern::full(int p) {
  SparsityPattern z(p);
  std::fill(z.low_.begin(), z.low_.end(), std::uint8_t{1});
  for (int k = 0; k < p; ++k) z.zcount_[k] = p - 1 - k;
  return z;
}

SparsityPattern SparsityPattern::from_matrix(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw ValidationError("SparsityPattern: matrix must be square and non-empty");
  const int p = static_cast<int>(m.rows());
  SparsityPattern z(p);
  for (int k = 0; k < p; ++k) {
    for (int j = k + 1; j < p; ++j) {
      const double a = m(j, k);
      const double b = m(k, j);
      if ((a != 0.0 && a != 1.0) || (b != 0.0 && b != 1.0))
        throw ValidationError("SparsityPattern: entries must be 0 or 1");
      if (a != b) throw ValidationError("SparsityPattern: matrix must be symmetric");
      if (a == 1.0) z.set(j, k, true);
    }
  }
  return z;
}

void SparsityPattern::set(int j, int k, bool on) {
  if (j == k) throw ValidationError("SparsityPattern: diagonal entries are fixed at 1");
  const int hi = std::max(j, k);
  const int lo = std::min(j, k);
  std::uint8_t& cell = low_[idx(hi, lo)];
  if (cell == static_cast<std::uint8_t>(on)) return;
  cell = static_cast<std::uint8_t>(on);
  zcount_[lo] += on ? 1 : -1;
}

int SparsityPattern::edge_count() const {
  int total = 0;
  for (int c : zcount_) total += c;
  return total;
}

std::vector<int> SparsityPattern::free_rows(int k) const {
  std::vector<int> rows;
  rows.reserve(zcount_[k]);
  for (int j = k + 1; j < p_; ++j)
    if (low_[idx(j, k)]) rows.push_back(j);
  return rows;
}

std::vector<int> SparsityPattern::constrained_rows(int k) const {
  std::vector<int> rows;
  rows.reserve(p_ - 1 - k - zcount_[k]);
  for (int j = k + 1; j < p_; ++j)
    if (!low_[idx(j, k)]) rows.push_back(j);
  return rows;
}

Matrix SparsityPattern::to_matrix() const {
  Matrix m = Matrix::Identity(p_, p_);
  for (int k = 0; k < p_; ++k)
    for (int j = k + 1; j < p_; ++j)
      if (low_[idx(j, k)]) m(j, k) = m(k, j) = 1.0;
  return m;
}

CholFactor::CholFactor(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw ValidationError("CholFactor: matrix must be square and non-empty");
  const int p = static_cast<int>(m.rows());
  for (int k = 0; k < p; ++k)
    if (!(m(k, k) > 0.0))
      throw ValidationError("CholFactor: diagonal entries must be strictly positive");
  m_ = m.triangularView<Eigen::Lower>();
}

void CholFactor::set(int j, int k, double v) {
  if (j < k) throw ValidationError("CholFactor: entries above the diagonal are fixed at 0");
  if (j == k && !(v > 0.0))
    throw ValidationError("CholFactor: diagonal entries must be strictly positive");
  m_(j, k) = v;
}

SpdMatrix SpdMatrix::from_lower(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw ValidationError("SpdMatrix: matrix must be square and non-empty");
  Matrix s = m;
  const int p = static_cast<int>(m.rows());
  for (int k = 0; k < p; ++k)
    for (int j = k + 1; j < p; ++j) s(k, j) = s(j, k);
  return SpdMatrix(std::move(s));
}

SpdMatrix SpdMatrix::from_symmetric(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw ValidationError("SpdMatrix: matrix must be square and non-empty");
  const int p = static_cast<int>(m.rows());
  for (int k = 0; k < p; ++k)
    for (int j = k + 1; j < p; ++j)
      if (m(j, k) != m(k, j))
        throw ValidationError("SpdMatrix: matrix is not exactly symmetric");
  return SpdMatrix(Matrix(m));
}

}  // namespace sbart
