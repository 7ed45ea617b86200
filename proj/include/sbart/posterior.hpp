#pragma once

#include <utility>
#include <vector>

#include "sbart/sbartlett.hpp"

namespace sbart {

enum class Family { gaussian, poisson };

/// Model specification: data with a missingness mask, prior edge-inclusion
/// probabilities, S-Bartlett prior on the precision factor, and likelihood
/// family. The Gaussian mean is fixed at zero; users center their data.
struct ModelSpec {
  Family family = Family::gaussian;
  Matrix y;            // n x p; values at unobserved cells are ignored
  BoolArray observed;  // n x p
  Matrix pi;           // p x p symmetric inclusion probabilities, diagonal ignored
  SBartlettParams prior;
  bool fit_intercepts = true;  // Poisson only

  int n() const { return static_cast<int>(y.rows()); }
  int p() const { return static_cast<int>(y.cols()); }

  /// Dimension checks, pi range, Poisson count integrality, and rejection of
  /// all-missing columns. Throws ValidationError.
  void validate() const;

  /// Masked cells in fixed (row-major) order.
  std::vector<std::pair<int, int>> missing_cells() const;
};

/// Latent quantities the sampler tracks alongside B and Z.
struct LatentState {
  Matrix y_complete;  // observed cells fixed, missing cells imputed
  Matrix w;           // n x p latent Gaussian fields (Poisson only, else 0x0)
  Vector mu;          // outcome intercepts (Poisson only, else empty)
};

/// Zero-mean Gaussian log density of the rows of y_complete with precision
/// Q Q^T, computed through triangular products:
///   -(np/2) log 2pi + n sum_k log q_kk - 1/2 ||Y Q||_F^2.
double gaussian_loglik(const Matrix& y_complete, const CholFactor& q);

/// Poisson log likelihood over observed cells with the canonical log link:
/// sum y_ij (mu_j + w_ij) - exp(mu_j + w_ij) - log(y_ij!).
double poisson_loglik(const ModelSpec& model, const LatentState& latent);

/// Joint log posterior of the packed B coordinates at fixed (Z, latent):
/// log_prior_b plus the family log likelihood at Q = transform_b_to_q(B).
/// Gaussian: likelihood of the completed data; Poisson: Gaussian log density
/// of the latent fields W. Terms constant in B are excluded.
double log_posterior_b(const CholFactor& b, const SparsityPattern& z,
                       const ModelSpec& model, const LatentState& latent);

/// Exact gradient of log_posterior_b with respect to the packed coordinates
/// (log-diagonal plus every sub-diagonal entry, inert ones included).
Vector grad_log_posterior_b(const CholFactor& b, const SparsityPattern& z,
                            const ModelSpec& model, const LatentState& latent);

/// Draw the missing block of one row from Y_m | Y_o, Lambda = QQ^T using the
/// precision partition (zero-mean model):
///   Y_m | Y_o ~ N(-Lambda_mm^{-1} Lambda_mo y_o, Lambda_mm^{-1}).
/// Rows with no observed entry are drawn from the unconditional law.
Vector impute_missing_gaussian(const CholFactor& q, const Vector& y_row,
                               const std::vector<bool>& observed, Rng& rng);

/// Same draw with the precision matrix already formed (saves the product
/// when many rows share one Lambda).
Vector impute_row_gaussian(const SpdMatrix& lambda, const Vector& y_row,
                           const std::vector<bool>& observed, Rng& rng);

/// Draw Y_ij ~ Poisson(exp(mu_j + w_ij)). Throws OverflowError when the
/// linear predictor exceeds 30 (divergent latent; reject upstream).
double impute_missing_poisson(const LatentState& latent, int i, int j, Rng& rng);

/// Log-posterior evaluation engine over the packed B coordinates for a fixed
/// pattern (held by the transform) and a fixed Gaussian data block (the
/// completed data or the latent fields). Caches the data Gram matrix.
/// Not thread-safe; one instance per chain.
class BPosterior {
 public:
  explicit BPosterior(const BartlettTransform* transform) : t_(transform) {}

  /// Replace the data block; recomputes the Gram matrix.
  void set_data(const Matrix& data);

  double value(const Vector& theta) const;
  double value_and_grad(const Vector& theta, Vector& grad) const;

  /// Likelihood part only, for a Q produced elsewhere (spike-and-slab sweep).
  double loglik_of_q(const Matrix& q) const;

 private:
  const BartlettTransform* t_;
  Matrix gram_;  // X^T X
  int n_ = 0;
  mutable Matrix b_ws_, q_ws_, mq_ws_, grad_q_ws_;
};

}  // namespace sbart
