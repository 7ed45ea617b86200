#pragma once

#include <vector>

#include "sbart/types.hpp"

namespace sbart {

/// Direction of the Gaussian KL divergence between precision matrices.
enum class KlOrientation { estimated_vs_true, true_vs_estimated };

/// Per-fit evaluation summary against a known truth.
struct EvalReport {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double kl_discrepancy = 0.0;
  double crps_mean = 0.0;  // NaN when no held-out cells exist
  double edge_count_mean = 0.0;
  double edge_count_lo = 0.0;
  double edge_count_hi = 0.0;
};

/// Fraction of true zero sub-diagonal entries recovered as zero. Returns 1
/// when the true pattern has no zeros.
double sensitivity(const SparsityPattern& z_true, const SparsityPattern& z_hat);

/// Fraction of true nonzero sub-diagonal entries recovered as nonzero.
/// Returns 1 when the true pattern has no edges.
double specificity(const SparsityPattern& z_true, const SparsityPattern& z_hat);

/// KL( N(0, lambda_hat^{-1}) || N(0, lambda_true^{-1}) ) =
///   1/2 [ tr(Lambda Lhat^{-1}) - log det(Lambda Lhat^{-1}) - p ],
/// computed via Cholesky solves. The orientation flag swaps the roles.
double kl_discrepancy(const SpdMatrix& lambda_hat, const SpdMatrix& lambda_true,
                      KlOrientation orientation = KlOrientation::estimated_vs_true);

/// Empirical CRPS of a predictive sample against the realized value:
///   mean |X - y| - 1/2 mean |X - X'|  over all sample pairs,
/// evaluated in O(L log L) after sorting. Requires at least two samples.
double crps_empirical(std::vector<double> samples, double y);

}  // namespace sbart
