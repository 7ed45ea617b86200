#include "sbart/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace sbart {

double sensitivity(const SparsityPattern& z_true, const SparsityPattern& z_hat) {
  const int p = z_true.dim();
  if (z_hat.dim() != p) throw ValidationError("sensitivity: dimension mismatch");
  int zeros = 0, hits = 0;
  for (int k = 0; k < p; ++k)
    for (int j = k + 1; j < p; ++j)
      if (!z_true(j, k)) {
        ++zeros;
        if (!z_hat(j, k)) ++hits;
      }
  if (zeros == 0) return 1.0;
  return static_cast<double>(hits) / zeros;
}

double specificity(const SparsityPattern& z_true, const SparsityPattern& z_hat) {
  const int p = z_true.dim();
  if (z_hat.dim() != p) throw ValidationError("specificity: dimension mismatch");
  int ones = 0, hits = 0;
  for (int k = 0; k < p; ++k)
    for (int j = k + 1; j < p; ++j)
      if (z_true(j, k)) {
        ++ones;
        if (z_hat(j, k)) ++hits;
      }
  if (ones == 0) return 1.0;
  return static_cast<double>(hits) / ones;
}

double kl_discrepancy(const SpdMatrix& lambda_hat, const SpdMatrix& lambda_true,
                      KlOrientation orientation) {
  const int p = lambda_hat.dim();
  if (lambda_true.dim() != p)
    throw ValidationError("kl_discrepancy: dimension mismatch");
  const Matrix& a = orientation == KlOrientation::estimated_vs_true
                        ? lambda_hat.matrix()
                        : lambda_true.matrix();
  const Matrix& b = orientation == KlOrientation::estimated_vs_true
                        ? lambda_true.matrix()
                        : lambda_hat.matrix();
  // KL(N(0,A^{-1}) || N(0,B^{-1})) = 1/2 [ tr(B A^{-1}) - log det(B A^{-1}) - p ]
  Eigen::LLT<Matrix> la(a), lb(b);
  if (la.info() != Eigen::Success || lb.info() != Eigen::Success)
    throw NotPositiveDefinite("kl_discrepancy: inputs must be positive definite");
  Matrix la_l = la.matrixL();
  Matrix lb_l = lb.matrixL();
  const double trace =
      la_l.triangularView<Eigen::Lower>().solve(lb_l).squaredNorm();
  const double logdet = 2.0 * (lb_l.diagonal().array().log().sum() -
                               la_l.diagonal().array().log().sum());
  const double kl = 0.5 * (trace - logdet - p);
  return std::max(kl, 0.0);  // clamp rounding noise at the A == B point
}

double crps_empirical(std::vector<double> samples, double y) {
  const std::size_t n = samples.size();
  if (n < 2) throw ValidationError("crps_empirical: need at least two samples");
  std::sort(samples.begin(), samples.end());
  double abs_err = 0.0;
  double gini = 0.0;  // sum_{i<j} (x_(j) - x_(i))
  for (std::size_t i = 0; i < n; ++i) {
    abs_err += std::abs(samples[i] - y);
    gini += (2.0 * static_cast<double>(i) - static_cast<double>(n) + 1.0) * samples[i];
  }
  const double nd = static_cast<double>(n);
  return abs_err / nd - gini / (nd * nd);
}

}  // namespace sbart
