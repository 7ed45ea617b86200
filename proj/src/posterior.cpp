#include "sbart/posterior.hpp"

#include <cmath>

namespace sbart {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kPoissonLinpredMax = 30.0;
}  // namespace

void ModelSpec::validate() const {
  const int nn = n();
  const int pp = p();
  if (pp == 0 || nn < 0) throw ValidationError("model: data must have p >= 1 columns");
  if (observed.rows() != nn || observed.cols() != pp)
    throw ValidationError("model: mask and data dimensions disagree");
  if (pi.rows() != pp || pi.cols() != pp)
    throw ValidationError("model: pi must be p x p");
  if (prior.dim() != pp)
    throw ValidationError("model: prior dimension does not match data");
  for (int k = 0; k < pp; ++k)
    for (int j = k + 1; j < pp; ++j) {
      const double v = pi(j, k);
      if (!(v >= 0.0 && v <= 1.0) || pi(k, j) != v)
        throw ValidationError("model: pi entries must be symmetric and in [0,1]");
    }
  for (int j = 0; j < pp; ++j) {
    bool any = false;
    for (int i = 0; i < nn; ++i) any = any || observed(i, j);
    if (nn > 0 && !any)
      throw ValidationError("model: column " + std::to_string(j) + " has no observed values");
  }
  if (family == Family::poisson) {
    for (int i = 0; i < nn; ++i)
      for (int j = 0; j < pp; ++j)
        if (observed(i, j)) {
          const double v = y(i, j);
          if (!(v >= 0.0) || v != std::floor(v))
            throw ValidationError("model: Poisson data must be non-negative integers");
        }
  }
}

std::vector<std::pair<int, int>> ModelSpec::missing_cells() const {
  std::vector<std::pair<int, int>> cells;
  for (int i = 0; i < n(); ++i)
    for (int j = 0; j < p(); ++j)
      if (!observed(i, j)) cells.emplace_back(i, j);
  return cells;
}

double gaussian_loglik(const Matrix& y_complete, const CholFactor& q) {
  const int n = static_cast<int>(y_complete.rows());
  const int p = q.dim();
  if (y_complete.cols() != p)
    throw ValidationError("gaussian_loglik: dimension mismatch");
  const double quad = (y_complete * q.matrix()).squaredNorm();
  const double logdiag = q.matrix().diagonal().array().log().sum();
  return -0.5 * n * p * kLog2Pi + n * logdiag - 0.5 * quad;
}

double poisson_loglik(const ModelSpec& model, const LatentState& latent) {
  double total = 0.0;
  for (int i = 0; i < model.n(); ++i)
    for (int j = 0; j < model.p(); ++j) {
      if (!model.observed(i, j)) continue;
      const double eta = latent.mu(j) + latent.w(i, j);
      const double yij = model.y(i, j);
      total += yij * eta - std::exp(eta) - std::lgamma(yij + 1.0);
    }
  return total;
}

namespace {

const Matrix& family_data(const ModelSpec& model, const LatentState& latent) {
  return model.family == Family::gaussian ? latent.y_complete : latent.w;
}

}  // namespace

double log_posterior_b(const CholFactor& b, const SparsityPattern& z,
                       const ModelSpec& model, const LatentState& latent) {
  BartlettTransform t(model.prior, z);
  BPosterior eval(&t);
  eval.set_data(family_data(model, latent));
  return eval.value(pack_b(b.matrix()));
}

Vector grad_log_posterior_b(const CholFactor& b, const SparsityPattern& z,
                            const ModelSpec& model, const LatentState& latent) {
  BartlettTransform t(model.prior, z);
  BPosterior eval(&t);
  eval.set_data(family_data(model, latent));
  Vector grad;
  eval.value_and_grad(pack_b(b.matrix()), grad);
  return grad;
}

Vector impute_missing_gaussian(const CholFactor& q, const Vector& y_row,
                               const std::vector<bool>& observed, Rng& rng) {
  return impute_row_gaussian(chol_product(q), y_row, observed, rng);
}

Vector impute_row_gaussian(const SpdMatrix& lam, const Vector& y_row,
                           const std::vector<bool>& observed, Rng& rng) {
  const int p = lam.dim();
  if (static_cast<int>(observed.size()) != p || y_row.size() != p)
    throw ValidationError("impute_missing_gaussian: dimension mismatch");
  std::vector<int> mi, oi;
  for (int j = 0; j < p; ++j) (observed[j] ? oi : mi).push_back(j);
  if (mi.empty()) return y_row;

  const int nm = static_cast<int>(mi.size());
  const int no = static_cast<int>(oi.size());
  Matrix lmm(nm, nm);
  for (int c = 0; c < nm; ++c)
    for (int r = 0; r < nm; ++r) lmm(r, c) = lam(mi[r], mi[c]);
  Vector rhs = Vector::Zero(nm);
  for (int r = 0; r < nm; ++r)
    for (int c = 0; c < no; ++c) rhs(r) += lam(mi[r], oi[c]) * y_row(oi[c]);

  Eigen::LLT<Matrix> llt(lmm);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("impute_missing_gaussian: missing block not PD");
  Vector mean = llt.solve(-rhs);
  Vector eta(nm);
  for (int i = 0; i < nm; ++i) eta(i) = rng.normal();
  // covariance Lambda_mm^{-1} = L^{-T} L^{-1}: draw = mean + L^{-T} eta
  Vector draw = mean + Matrix(llt.matrixL())
                           .transpose()
                           .triangularView<Eigen::Upper>()
                           .solve(eta);
  Vector out = y_row;
  for (int i = 0; i < nm; ++i) out(mi[i]) = draw(i);
  return out;
}

double impute_missing_poisson(const LatentState& latent, int i, int j, Rng& rng) {
  const double eta = latent.mu(j) + latent.w(i, j);
  if (eta > kPoissonLinpredMax)
    throw OverflowError("impute_missing_poisson: linear predictor exceeds 30");
  return static_cast<double>(rng.poisson(std::exp(eta)));
}

void BPosterior::set_data(const Matrix& data) {
  n_ = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  gram_ = Matrix::Zero(p, p);
  gram_.selfadjointView<Eigen::Lower>().rankUpdate(data.transpose());
  gram_ = gram_.selfadjointView<Eigen::Lower>();
}

double BPosterior::loglik_of_q(const Matrix& q) const {
  const int p = static_cast<int>(q.rows());
  mq_ws_.noalias() = gram_ * q;
  const double quad = q.cwiseProduct(mq_ws_).sum();
  const double logdiag = q.diagonal().array().log().sum();
  return -0.5 * n_ * p * kLog2Pi + n_ * logdiag - 0.5 * quad;
}

double BPosterior::value(const Vector& theta) const {
  b_ws_ = unpack_b(theta);
  t_->apply(b_ws_, q_ws_);
  const double lik = loglik_of_q(q_ws_);
  return log_prior_b(CholFactor(b_ws_), t_->pattern(), t_->params().nu) + lik;
}

double BPosterior::value_and_grad(const Vector& theta, Vector& grad) const {
  b_ws_ = unpack_b(theta);
  t_->apply(b_ws_, q_ws_);
  const int p = static_cast<int>(q_ws_.rows());

  mq_ws_.noalias() = gram_ * q_ws_;
  const double quad = q_ws_.cwiseProduct(mq_ws_).sum();
  const double logdiag = q_ws_.diagonal().array().log().sum();
  const double lik = -0.5 * n_ * p * kLog2Pi + n_ * logdiag - 0.5 * quad;

  // dL/dQ on the lower triangle: n diag(1/q_kk) - (M Q)
  grad_q_ws_ = -mq_ws_;
  grad_q_ws_.triangularView<Eigen::StrictlyUpper>().setZero();
  grad_q_ws_.diagonal().array() += static_cast<double>(n_) / q_ws_.diagonal().array();

  grad = t_->pullback(b_ws_, q_ws_, grad_q_ws_);
  grad += grad_log_prior_b(b_ws_, t_->pattern(), t_->params().nu);

  const double prior =
      log_prior_b(CholFactor(b_ws_), t_->pattern(), t_->params().nu);
  return prior + lik;
}

}  // namespace sbart
