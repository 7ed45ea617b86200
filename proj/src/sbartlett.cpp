#include "sbart/sbartlett.hpp"

#include <cassert>
#include <cmath>

namespace sbart {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLog2 = 0.6931471805599453094;

Vector gather_col(const Matrix& m, const std::vector<int>& rows, int col) {
  Vector out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out(r) = m(rows[r], col);
  return out;
}

/// log Gamma(x | shape, rate) density.
double gamma_logpdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace

SBartlettParams SBartlettParams::identity(int p, double nu) {
  if (!(nu > 0.0)) throw ValidationError("SBartlettParams: nu must be positive");
  SBartlettParams out;
  out.nu = nu;
  out.scale = SpdMatrix::identity(p);
  out.psi = CholFactor(p);
  return out;
}

SBartlettParams SBartlettParams::from_scale(const SpdMatrix& s, double nu) {
  if (!(nu > 0.0)) throw ValidationError("SBartlettParams: nu must be positive");
  SBartlettParams out;
  out.nu = nu;
  out.scale = s;
  out.psi = cholesky(s);
  return out;
}

SpdMatrix sample_sparse_generic(const SparsityPattern& z,
                                const ElementDistributions& dists, Rng& rng) {
  const int p = z.dim();
  Matrix q = Matrix::Zero(p, p);
  for (int k = 0; k < p; ++k) q(k, k) = dists.diag(rng);
  for (int k = 0; k < p; ++k) {
    for (int j = k + 1; j < p; ++j) {
      q(j, k) = z(j, k) ? dists.offdiag(rng)
                        : constrained_entry(q, q(k, k), j, k);
    }
  }
  return chol_product(CholFactor(q));
}

namespace detail {

ColumnOps make_column_ops(const Matrix& psi, const SparsityPattern& z, int k) {
  const int p = static_cast<int>(psi.rows());
  const int m = p - 1 - k;
  ColumnOps ops;
  ops.free_rows = z.free_rows(k);
  ops.cons_rows = z.constrained_rows(k);
  const int nf = static_cast<int>(ops.free_rows.size());
  const int nc = static_cast<int>(ops.cons_rows.size());
  if (m == 0 || nf == 0) return ops;

  // V = Psi_kk Psi_kk^T over the sub-column block, exactly symmetric.
  Matrix v = Matrix::Zero(m, m);
  v.selfadjointView<Eigen::Lower>().rankUpdate(psi.block(k + 1, k + 1, m, m));
  Matrix vfull = v.selfadjointView<Eigen::Lower>();

  // Local indices within the sub-column.
  std::vector<int> lf(nf), lc(nc);
  for (int i = 0; i < nf; ++i) lf[i] = ops.free_rows[i] - k - 1;
  for (int i = 0; i < nc; ++i) lc[i] = ops.cons_rows[i] - k - 1;

  const Vector psi_f = gather_col(psi, ops.free_rows, k);
  const double psi_kk = psi(k, k);

  // No explicit inverse anywhere: one Cholesky of V_CC plus solves.
  Matrix sigma;
  if (nc == 0) {
    sigma = Matrix(nf, nf);
    for (int c = 0; c < nf; ++c)
      for (int r = 0; r < nf; ++r) sigma(r, c) = vfull(lf[r], lf[c]);
    ops.base = psi_f / psi_kk;
  } else {
    Matrix vcc(nc, nc), vcf(nc, nf);
    for (int c = 0; c < nc; ++c)
      for (int r = 0; r < nc; ++r) vcc(r, c) = vfull(lc[r], lc[c]);
    for (int c = 0; c < nf; ++c)
      for (int r = 0; r < nc; ++r) vcf(r, c) = vfull(lc[r], lf[c]);
    Eigen::LLT<Matrix> llt(vcc);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite(
          "column conditional: constrained block of V is not positive definite");
    ops.coupling = llt.solve(vcf).transpose();  // V_FC V_CC^{-1}
    sigma = Matrix(nf, nf);
    for (int c = 0; c < nf; ++c)
      for (int r = 0; r < nf; ++r) sigma(r, c) = vfull(lf[r], lf[c]);
    sigma.noalias() -= ops.coupling * vcf;
    sigma = (0.5 * (sigma + sigma.transpose())).eval();
    const Vector psi_c = gather_col(psi, ops.cons_rows, k);
    ops.base = (psi_f - ops.coupling * psi_c) / psi_kk;
  }

  Eigen::LLT<Matrix> llt_sigma(sigma);
  if (llt_sigma.info() != Eigen::Success)
    throw NotPositiveDefinite(
        "column conditional: Schur complement lost positive definiteness");
  ops.cov_chol = llt_sigma.matrixL();
  return ops;
}

}  // namespace detail

ColumnConditional conditional_column(const SBartlettParams& params,
                                     const SparsityPattern& z, int k,
                                     double q_kk, const Vector& q_constrained) {
  const int p = params.dim();
  if (z.dim() != p)
    throw ValidationError("conditional_column: pattern/params dimension mismatch");
  if (k < 0 || k > p - 2)
    throw ValidationError("conditional_column: column index out of range");
  detail::ColumnOps ops = detail::make_column_ops(params.psi.matrix(), z, k);
  if (q_constrained.size() != static_cast<Eigen::Index>(ops.cons_rows.size()))
    throw ValidationError("conditional_column: wrong number of constrained values");

  ColumnConditional out;
  out.constrained_rows = ops.cons_rows;
  out.free_rows = ops.free_rows;
  const int nf = static_cast<int>(ops.free_rows.size());
  out.mean = Vector::Zero(nf);
  out.cov_chol = ops.cov_chol;
  if (nf > 0) {
    out.mean = q_kk * ops.base;
    if (!ops.cons_rows.empty()) out.mean += ops.coupling * q_constrained;
  }
  return out;
}

CholFactor sample_prior(const SBartlettParams& params, const SparsityPattern& z,
                        Rng& rng) {
  const int p = params.dim();
  if (z.dim() != p)
    throw ValidationError("sample_prior: pattern/params dimension mismatch");
  const Matrix& psi = params.psi.matrix();
  Matrix q = Matrix::Zero(p, p);
  for (int k = 0; k < p; ++k) {
    const double shape = 0.5 * (params.nu + z.free_count(k));
    const double rate = 1.0 / (2.0 * psi(k, k) * psi(k, k));
    q(k, k) = std::sqrt(rng.gamma(shape, rate));
  }
  for (int k = 0; k < p - 1; ++k) {
    detail::ColumnOps ops = detail::make_column_ops(psi, z, k);
    Vector qc(ops.cons_rows.size());
    for (std::size_t i = 0; i < ops.cons_rows.size(); ++i) {
      const int j = ops.cons_rows[i];
      q(j, k) = constrained_entry(q, q(k, k), j, k);
      qc(i) = q(j, k);
    }
    const int nf = static_cast<int>(ops.free_rows.size());
    if (nf > 0) {
      Vector eta(nf);
      for (int i = 0; i < nf; ++i) eta(i) = rng.normal();
      Vector qf = q(k, k) * ops.base;
      if (!ops.cons_rows.empty()) qf += ops.coupling * qc;
      qf += ops.cov_chol.triangularView<Eigen::Lower>() * eta;
      for (int i = 0; i < nf; ++i) q(ops.free_rows[i], k) = qf(i);
    }
  }
  return CholFactor(q);
}

CholFactor transform_b_to_q(const CholFactor& b, const SBartlettParams& params,
                            const SparsityPattern& z) {
  BartlettTransform t(params, z);
  Matrix q;
  t.apply(b.matrix(), q);
  return CholFactor(q);
}

CholFactor transform_q_to_b(const CholFactor& q, const SBartlettParams& params,
                            const SparsityPattern& z) {
  BartlettTransform t(params, z);
  Matrix b;
  t.invert(q.matrix(), b);
  return CholFactor(b);
}

double log_prior_b(const CholFactor& b, const SparsityPattern& z, double nu) {
  if (!(nu > 0.0)) throw ValidationError("log_prior_b: nu must be positive");
  const int p = b.dim();
  if (z.dim() != p) throw ValidationError("log_prior_b: dimension mismatch");
  double total = 0.0;
  for (int k = 0; k < p; ++k) {
    const double bkk = b(k, k);
    const double ell = std::log(bkk);
    const double shape = 0.5 * (nu + z.free_count(k));
    total += gamma_logpdf(bkk * bkk, shape, 0.5) + kLog2 + 2.0 * ell;
    for (int j = k + 1; j < p; ++j) {
      const double v = b(j, k);
      total += -0.5 * v * v - 0.5 * kLog2Pi;
    }
  }
  return total;
}

Matrix unpack_b(const Vector& theta) {
  // dim = p + p(p-1)/2  =>  p = (sqrt(8 dim + 1) - 1) / 2
  const int d = static_cast<int>(theta.size());
  const int p = static_cast<int>((std::sqrt(8.0 * d + 1.0) - 1.0) / 2.0 + 0.5);
  BLayout lay(p);
  if (lay.dim() != d) throw ValidationError("unpack_b: invalid coordinate length");
  Matrix b = Matrix::Zero(p, p);
  for (int k = 0; k < p; ++k) b(k, k) = std::exp(theta(lay.diag(k)));
  for (int k = 0; k < p - 1; ++k)
    for (int j = k + 1; j < p; ++j) b(j, k) = theta(lay.low(j, k));
  return b;
}

Vector pack_b(const Matrix& b) {
  const int p = static_cast<int>(b.rows());
  BLayout lay(p);
  Vector theta(lay.dim());
  for (int k = 0; k < p; ++k) theta(lay.diag(k)) = std::log(b(k, k));
  for (int k = 0; k < p - 1; ++k)
    for (int j = k + 1; j < p; ++j) theta(lay.low(j, k)) = b(j, k);
  return theta;
}

Vector grad_log_prior_b(const Matrix& b, const SparsityPattern& z, double nu) {
  const int p = static_cast<int>(b.rows());
  BLayout lay(p);
  Vector g(lay.dim());
  for (int k = 0; k < p; ++k)
    g(lay.diag(k)) = (nu + z.free_count(k)) - b(k, k) * b(k, k);
  for (int k = 0; k < p - 1; ++k)
    for (int j = k + 1; j < p; ++j) g(lay.low(j, k)) = -b(j, k);
  return g;
}

BartlettTransform::BartlettTransform(SBartlettParams params, SparsityPattern z)
    : params_(std::move(params)), z_(std::move(z)) {
  if (params_.dim() != z_.dim())
    throw ValidationError("BartlettTransform: pattern/params dimension mismatch");
  const int p = z_.dim();
  ops_.resize(p);
  for (int k = 0; k < p; ++k) rebuild_column(k);
}

void BartlettTransform::rebuild_column(int k) {
  ops_[k] = detail::make_column_ops(params_.psi.matrix(), z_, k);
}

void BartlettTransform::set_pattern_entry(int j, int k, bool on) {
  const int col = std::min(j, k);
  if (z_(j, k) == on) return;
  z_.set(j, k, on);
  try {
    rebuild_column(col);
  } catch (...) {
    z_.set(j, k, !on);  // roll back so pattern and operators stay consistent
    throw;
  }
}

void BartlettTransform::apply(const Matrix& b, Matrix& q) const {
  const int p = z_.dim();
  q.setZero(p, p);
  apply_from_column(b, 0, q);
}

void BartlettTransform::apply_from_column(const Matrix& b, int k0,
                                          Matrix& q) const {
  const int p = z_.dim();
  const Matrix& psi = params_.psi.matrix();
  for (int k = k0; k < p; ++k) {
    const detail::ColumnOps& ops = ops_[k];
    const double qkk = psi(k, k) * b(k, k);
    q(k, k) = qkk;
    Vector qc(ops.cons_rows.size());
    for (std::size_t i = 0; i < ops.cons_rows.size(); ++i) {
      const int j = ops.cons_rows[i];
      q(j, k) = constrained_entry(q, qkk, j, k);
      qc(i) = q(j, k);
    }
    const int nf = static_cast<int>(ops.free_rows.size());
    if (nf > 0) {
      Vector bf = gather_col(b, ops.free_rows, k);
      Vector qf = qkk * ops.base;
      if (!ops.cons_rows.empty()) qf.noalias() += ops.coupling * qc;
      qf.noalias() += ops.cov_chol.triangularView<Eigen::Lower>() * bf;
      for (int i = 0; i < nf; ++i) q(ops.free_rows[i], k) = qf(i);
    }
  }
}

void BartlettTransform::invert(const Matrix& q, Matrix& b) const {
  const int p = z_.dim();
  const Matrix& psi = params_.psi.matrix();
  b.setZero(p, p);
  for (int k = 0; k < p; ++k) {
    const double qkk = q(k, k);
    b(k, k) = qkk / psi(k, k);
    const detail::ColumnOps& ops = ops_[k];
    const int nf = static_cast<int>(ops.free_rows.size());
    if (nf == 0) continue;
    Vector qf = gather_col(q, ops.free_rows, k);
    Vector rhs = qf - qkk * ops.base;
    if (!ops.cons_rows.empty()) {
      Vector qc = gather_col(q, ops.cons_rows, k);
      rhs.noalias() -= ops.coupling * qc;
    }
    Vector bf = ops.cov_chol.triangularView<Eigen::Lower>().solve(rhs);
    for (int i = 0; i < nf; ++i) b(ops.free_rows[i], k) = bf(i);
  }
}

Vector BartlettTransform::pullback(const Matrix& b, const Matrix& q,
                                   Matrix& grad_q) const {
  const int p = z_.dim();
  const Matrix& psi = params_.psi.matrix();
  BLayout lay(p);
  Vector g = Vector::Zero(lay.dim());

  for (int k = p - 1; k >= 0; --k) {
    const detail::ColumnOps& ops = ops_[k];
    const double qkk = q(k, k);
    double gd = grad_q(k, k);  // adjoint of q_kk, later columns already folded in

    const int nf = static_cast<int>(ops.free_rows.size());
    const int nc = static_cast<int>(ops.cons_rows.size());
    if (nf > 0) {
      Vector gf = gather_col(grad_q, ops.free_rows, k);
      // q_f = qkk * base + coupling * q_c + F * b_f
      Vector gbf = ops.cov_chol.transpose().triangularView<Eigen::Upper>() * gf;
      for (int i = 0; i < nf; ++i) g(lay.low(ops.free_rows[i], k)) += gbf(i);
      if (nc > 0) {
        Vector gc_add = ops.coupling.transpose() * gf;
        for (int i = 0; i < nc; ++i) grad_q(ops.cons_rows[i], k) += gc_add(i);
      }
      gd += ops.base.dot(gf);
    }
    if (nc > 0 && k > 0) {
      // q_jk = -(1/qkk) sum_{t<k} q_jt q_kt
      for (int i = 0; i < nc; ++i) {
        const int j = ops.cons_rows[i];
        const double s = grad_q(j, k);
        if (s == 0.0) continue;
        gd += s * (-q(j, k) / qkk);
        const double f = -s / qkk;
        grad_q.row(j).head(k) += f * q.row(k).head(k);
        grad_q.row(k).head(k) += f * q.row(j).head(k);
      }
    }
    // theta_k = log b_kk, q_kk = psi_kk b_kk
    g(lay.diag(k)) += gd * psi(k, k) * b(k, k);
  }
  return g;
}

}  // namespace sbart
