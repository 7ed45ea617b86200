#pragma once

#include <functional>
#include <vector>

#include "sbart/linalg.hpp"
#include "sbart/rng.hpp"
#include "sbart/types.hpp"

namespace sbart {

/// Parameters of the S-Bartlett distribution: degrees of freedom nu > 0,
/// SPD scale matrix S and its cached lower Cholesky factor Psi.
struct SBartlettParams {
  double nu = 1.0;
  SpdMatrix scale;
  CholFactor psi;

  static SBartlettParams identity(int p, double nu);
  /// Factors s (throws NotPositiveDefinite if s is not PD).
  static SBartlettParams from_scale(const SpdMatrix& s, double nu);

  int dim() const { return psi.dim(); }
};

/// User-chosen element laws for the generic sparse sampler: g_d over the
/// positive reals for diagonal entries, g_o over the reals for free
/// off-diagonal entries.
struct ElementDistributions {
  std::function<double(Rng&)> diag;
  std::function<double(Rng&)> offdiag;
};

/// Conditional law of the free entries of column k given the diagonal entry
/// and the constrained entries: mean mu_c and a lower Cholesky factor of
/// Sigma_c, plus the row index sets the conditioning refers to.
struct ColumnConditional {
  Vector mean;
  Matrix cov_chol;
  std::vector<int> constrained_rows;
  std::vector<int> free_rows;
};

/// Draw Lambda = Q Q^T with the sparsity pattern z: diagonal entries from
/// dists.diag, free sub-diagonal entries from dists.offdiag, constrained
/// entries forced via constrained_entry, columns processed in increasing
/// order.
SpdMatrix sample_sparse_generic(const SparsityPattern& z,
                                const ElementDistributions& dists, Rng& rng);

/// Conditional mean and covariance factor of the free entries of column k
/// (0-based, 0 <= k <= p-2) given q_kk and the values at the constrained
/// rows. The marginal column law has mean phi = (q_kk / psi_kk) * psi_k and
/// covariance V = Psi_kk Psi_kk^T; conditioning is standard Gaussian
/// conditioning of the free block on the constrained block.
ColumnConditional conditional_column(const SBartlettParams& params,
                                     const SparsityPattern& z, int k,
                                     double q_kk, const Vector& q_constrained);

/// Draw Q from the S-Bartlett prior: q_kk^2 ~ Gamma((nu + z_k)/2,
/// rate 1/(2 psi_kk^2)), constrained rows forced, free rows from the
/// column conditional. Lambda = chol_product(Q).
CholFactor sample_prior(const SBartlettParams& params, const SparsityPattern& z,
                        Rng& rng);

/// Deterministic map from a fully free lower-triangular B to the sparse
/// Cholesky factor Q: q_kk = psi_kk b_kk, constrained rows forced, free rows
/// mu_c + chol(Sigma_c) b_free. When B carries the Bartlett law with
/// per-column degrees of freedom nu + z_k, the output Q has the S-Bartlett
/// law of sample_prior.
CholFactor transform_b_to_q(const CholFactor& b, const SBartlettParams& params,
                            const SparsityPattern& z);

/// Inverse of transform_b_to_q on the free coordinates. Entries of B at
/// constrained (inert) positions are set to 0; they do not influence Q.
CholFactor transform_q_to_b(const CholFactor& q, const SBartlettParams& params,
                            const SparsityPattern& z);

/// Log density of the augmented Bartlett variable B given Z, in the sampling
/// parameterization (ell_k = log b_kk unconstrained): per column the
/// Gamma((nu + z_k)/2, rate 1/2) density of b_kk^2 plus the change-of-
/// variables term log 2 + 2 ell_k, plus standard-normal terms for every
/// sub-diagonal entry (inert coordinates included). Constants included.
double log_prior_b(const CholFactor& b, const SparsityPattern& z, double nu);

/// Packed coordinate layout for the sampled parameterization of B:
/// theta[0..p) = log diag(B), then strictly-lower entries column-major.
struct BLayout {
  int p = 0;

  explicit BLayout(int p_in) : p(p_in) {}
  int dim() const { return p + p * (p - 1) / 2; }
  int diag(int k) const { return k; }
  int low(int j, int k) const {  // j > k
    return p + k * (p - 1) - k * (k - 1) / 2 + (j - k - 1);
  }
};

/// theta -> B (exponentiates the diagonal block).
Matrix unpack_b(const Vector& theta);
/// B -> theta.
Vector pack_b(const Matrix& b);

/// Gradient of log_prior_b with respect to the packed coordinates:
/// (nu + z_k) - b_kk^2 on the log-diagonal, -b_jk on every sub-diagonal.
Vector grad_log_prior_b(const Matrix& b, const SparsityPattern& z, double nu);

namespace detail {

/// Pattern-dependent per-column quantities of the B -> Q map, cached so the
/// map and its adjoint can be evaluated repeatedly at fixed (params, Z).
/// For column k with free rows F and constrained rows C (local order):
///   coupling = V_FC V_CC^{-1}            (empty when C is empty)
///   cov_chol = chol(V_FF - coupling V_CF)
///   base     = (psi_F - coupling psi_C) / psi_kk
/// so that mu_c = q_kk * base + coupling * q_C.
struct ColumnOps {
  std::vector<int> free_rows;
  std::vector<int> cons_rows;
  Matrix coupling;
  Matrix cov_chol;
  Vector base;
};

ColumnOps make_column_ops(const Matrix& psi, const SparsityPattern& z, int k);

}  // namespace detail

/// The deterministic B -> Q map for fixed (params, pattern), with cached
/// per-column operators, partial re-evaluation from a given column (used by
/// the spike-and-slab sweep), inversion, and the reverse-mode pullback of a
/// gradient in Q to the packed B coordinates.
class BartlettTransform {
 public:
  BartlettTransform(SBartlettParams params, SparsityPattern z);

  const SBartlettParams& params() const { return params_; }
  const SparsityPattern& pattern() const { return z_; }
  int dim() const { return z_.dim(); }

  /// Flip one pattern entry and rebuild the affected column's operators.
  /// Throws NotPositiveDefinite if the new column operators cannot be
  /// formed, in which case the pattern is rolled back.
  void set_pattern_entry(int j, int k, bool on);

  /// Full map; q is resized and overwritten.
  void apply(const Matrix& b, Matrix& q) const;

  /// Recompute columns k0..p-1 of q assuming columns < k0 are current.
  void apply_from_column(const Matrix& b, int k0, Matrix& q) const;

  /// Recover B on the free coordinates (inert entries set to 0).
  void invert(const Matrix& q, Matrix& b) const;

  /// Reverse-mode pullback: given dL/dQ on the lower triangle (grad_q is
  /// consumed as workspace), accumulate dL/dtheta for the packed coordinates.
  /// b and q must be a consistent pair produced by apply().
  Vector pullback(const Matrix& b, const Matrix& q, Matrix& grad_q) const;

 private:
  void rebuild_column(int k);

  SBartlettParams params_;
  SparsityPattern z_;
  std::vector<detail::ColumnOps> ops_;
};

}  // namespace sbart
