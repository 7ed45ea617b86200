#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbart {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Cholesky pivot failure: the input is not (numerically) positive definite.
struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A latent linear predictor left the safe range for exponentiation.
struct OverflowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Summary requested from an empty sample sequence.
struct EmptyChainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// More than 90% of post-adaptation transitions diverged.
struct AllDivergentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid user input: configuration, flags or file contents.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Symmetric binary p x p matrix encoding which precision entries are free
/// (1) or forced to zero (0). The diagonal is always 1. Only the strictly
/// lower triangle is stored; per-column counts of free sub-diagonal entries
/// are cached so z_k lookups are O(1).
class SparsityPattern {
 public:
  SparsityPattern() = default;
  /// Identity pattern (diagonal only).
  explicit SparsityPattern(int p);

  static SparsityPattern identity(int p) { return SparsityPattern(p); }
  static SparsityPattern full(int p);
  /// From a dense 0/1 matrix; must be square and symmetric, entries 0 or 1.
  static SparsityPattern from_matrix(const Matrix& z);

  int dim() const { return p_; }

  /// Symmetric access; diagonal entries are always true.
  bool at(int j, int k) const {
    if (j == k) return true;
    return low_[idx(std::max(j, k), std::min(j, k))] != 0;
  }
  bool operator()(int j, int k) const { return at(j, k); }

  /// Set the (j,k) = (k,j) off-diagonal entry. j != k required.
  void set(int j, int k, bool on);

  /// z_k: number of free entries strictly below the diagonal in column k.
  int free_count(int k) const { return zcount_[k]; }

  /// Total number of ones strictly below the diagonal.
  int edge_count() const;

  /// Row indices j > k with z_jk = 1, ascending.
  std::vector<int> free_rows(int k) const;
  /// Row indices j > k with z_jk = 0, ascending.
  std::vector<int> constrained_rows(int k) const;

  Matrix to_matrix() const;

  bool operator==(const SparsityPattern& other) const {
    return p_ == other.p_ && low_ == other.low_;
  }

 private:
  int idx(int j, int k) const {  // j > k
    return base_[k] + (j - k - 1);
  }

  int p_ = 0;
  std::vector<std::uint8_t> low_;  // strictly-lower entries, column-major
  std::vector<int> base_;          // column offsets into low_
  std::vector<int> zcount_;        // cached z_k per column
};

/// Lower-triangular matrix with strictly positive diagonal. Entries above
/// the diagonal are identically zero.
class CholFactor {
 public:
  CholFactor() = default;
  /// Identity factor of dimension p.
  explicit CholFactor(int p) : m_(Matrix::Identity(p, p)) {}
  /// Takes the lower triangle of m; throws ValidationError unless the
  /// diagonal is strictly positive.
  explicit CholFactor(const Matrix& m);

  int dim() const { return static_cast<int>(m_.rows()); }
  double operator()(int j, int k) const { return m_(j, k); }
  /// Mutate entry (j,k), j >= k. Diagonal values must stay positive.
  void set(int j, int k, double v);
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

/// Symmetric positive definite matrix. Symmetry holds exactly by
/// construction (lower triangle mirrored); definiteness is established by
/// the producing operation, not re-verified here.
class SpdMatrix {
 public:
  SpdMatrix() = default;

  /// Mirror the lower triangle of m onto the upper one.
  static SpdMatrix from_lower(const Matrix& m);
  /// Adopt m as-is; throws ValidationError if any m(i,j) != m(j,i) exactly.
  static SpdMatrix from_symmetric(const Matrix& m);
  static SpdMatrix identity(int p) { return SpdMatrix(Matrix::Identity(p, p)); }

  int dim() const { return static_cast<int>(m_.rows()); }
  double operator()(int i, int j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }

 private:
  explicit SpdMatrix(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

}  // namespace sbart
