#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sbart/densities.hpp"
#include "sbart/posterior.hpp"
#include "support/oracles.hpp"

using namespace sbart;

namespace {

SparsityPattern random_pattern(int p, double density, Rng& rng) {
  SparsityPattern z(p);
  for (int k = 0; k < p - 1; ++k)
    for (int j = k + 1; j < p; ++j)
      if (rng.uniform() < density) z.set(j, k, true);
  return z;
}

SpdMatrix random_scale(int p, Rng& rng) {
  Matrix m = Matrix::Zero(p, p);
  for (int k = 0; k < p; ++k) {
    m(k, k) = 0.8 + 0.6 * rng.uniform();
    for (int j = k + 1; j < p; ++j) m(j, k) = 0.4 * rng.normal();
  }
  return chol_product(CholFactor(m));
}

Matrix random_b(const SparsityPattern& z, double nu, Rng& rng) {
  const int p = z.dim();
  Matrix b = Matrix::Zero(p, p);
  for (int k = 0; k < p; ++k) {
    b(k, k) = std::sqrt(rng.gamma(0.5 * (nu + z.free_count(k)), 0.5));
    for (int j = k + 1; j < p; ++j) b(j, k) = rng.normal();
  }
  return b;
}

struct RandomState {
  ModelSpec model;
  LatentState latent;
  SparsityPattern z;
  Matrix b;
};

RandomState make_random_state(Family family, Rng& rng) {
  RandomState st{ModelSpec{}, LatentState{}, SparsityPattern(2), Matrix()};
  const int p = 2 + rng.uniform_int(5);
  const int n = rng.uniform_int(16);
  const double nu = 1.5 + 2.5 * rng.uniform();
  st.model.family = family;
  st.model.prior = rng.uniform() < 0.5 ? SBartlettParams::identity(p, nu)
                                       : SBartlettParams::from_scale(random_scale(p, rng), nu);
  st.model.pi = Matrix::Constant(p, p, 0.5);
  st.model.y = Matrix(n, p);
  st.model.observed = BoolArray::Constant(n, p, true);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) {
      if (family == Family::gaussian) {
        st.model.y(i, j) = rng.normal();
      } else {
        st.model.y(i, j) = static_cast<double>(rng.poisson(2.0));
      }
      if (n > 2 && rng.uniform() < 0.15) st.model.observed(i, j) = false;
    }
  st.latent.y_complete = Matrix(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j)
      st.latent.y_complete(i, j) =
          st.model.observed(i, j) ? st.model.y(i, j) : rng.normal();
  if (family == Family::poisson) {
    st.latent.w = Matrix(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) st.latent.w(i, j) = 0.7 * rng.normal();
    st.latent.mu = Vector(p);
    for (int j = 0; j < p; ++j) st.latent.mu(j) = 0.3 * rng.normal();
  }
  st.z = random_pattern(p, rng.uniform(), rng);
  st.b = random_b(st.z, nu, rng);
  return st;
}

}  // namespace

TEST_CASE("gaussian_loglik scalar and identity cases") {
  Matrix y1(1, 1);
  y1 << 0.0;
  CHECK(gaussian_loglik(y1, CholFactor(1)) ==
        doctest::Approx(-0.5 * log2pi).epsilon(1e-14));

  Rng rng(1);
  Matrix y2(2, 2);
  y2 << 0.3, -1.2, 0.5, 2.0;
  const double expected = -2.0 * log2pi - 0.5 * y2.squaredNorm();
  CHECK(gaussian_loglik(y2, CholFactor(2)) ==
        doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("gaussian_loglik matches the dense multivariate normal oracle") {
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 4 + rng.uniform_int(17);  // up to 20
    const int p = 3 + rng.uniform_int(8);   // up to 10
    Matrix q = Matrix::Zero(p, p);
    for (int k = 0; k < p; ++k) {
      q(k, k) = 0.5 + rng.uniform();
      for (int j = k + 1; j < p; ++j) q(j, k) = rng.normal();
    }
    Matrix y(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) y(i, j) = rng.normal();
    const Matrix cov = chol_product(CholFactor(q)).matrix().inverse();
    double expected = 0.0;
    for (int i = 0; i < n; ++i)
      expected += oracle::mvn_logpdf_dense(y.row(i), Vector::Zero(p), cov);
    const double got = gaussian_loglik(y, CholFactor(q));
    CHECK(std::abs(got - expected) < 1e-10 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("poisson_loglik scalar cases") {
  ModelSpec model;
  model.family = Family::poisson;
  model.prior = SBartlettParams::identity(2, 3.0);
  model.pi = Matrix::Constant(2, 2, 0.5);
  model.y = Matrix(1, 2);
  model.y << 0.0, 2.0;
  model.observed = BoolArray::Constant(1, 2, true);
  LatentState latent;
  latent.y_complete = model.y;
  latent.w = Matrix::Zero(1, 2);
  latent.mu = Vector::Zero(2);
  latent.mu(1) = std::log(2.0);

  // y = 0 at eta = 0 contributes -1; y = 2 at eta = log 2 contributes
  // 2 log 2 - 2 - log 2!
  const double expected = -1.0 + 2.0 * std::log(2.0) - 2.0 - std::log(2.0);
  CHECK(poisson_loglik(model, latent) == doctest::Approx(expected).epsilon(1e-13));

  // masked cells contribute nothing
  model.observed(0, 0) = false;
  CHECK(poisson_loglik(model, latent) ==
        doctest::Approx(expected + 1.0).epsilon(1e-13));
}

TEST_CASE("log_posterior_b composes prior and likelihood") {
  Rng rng(3);
  const int p = 3, n = 5;
  ModelSpec model;
  model.prior = SBartlettParams::identity(p, 3.0);
  model.pi = Matrix::Constant(p, p, 0.5);
  model.y = Matrix(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) model.y(i, j) = rng.normal();
  model.observed = BoolArray::Constant(n, p, true);
  LatentState latent;
  latent.y_complete = model.y;

  const SparsityPattern z = SparsityPattern::full(p);
  const Matrix b = random_b(z, 3.0, rng);
  // full Z, S = I: the transform is the identity, so Lambda = B B^T
  const double lp = log_posterior_b(CholFactor(b), z, model, latent);
  const double expected =
      log_prior_b(CholFactor(b), z, 3.0) + gaussian_loglik(model.y, CholFactor(b));
  CHECK(lp == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log_posterior_b is finite on random admissible states") {
  Rng rng(4);
  for (int rep = 0; rep < 40; ++rep) {
    const Family family = rep % 2 == 0 ? Family::gaussian : Family::poisson;
    const RandomState st = make_random_state(family, rng);
    const double lp = log_posterior_b(CholFactor(st.b), st.z, st.model, st.latent);
    CHECK(std::isfinite(lp));
  }
}

TEST_CASE("inert coordinates carry prior-only gradients at k = 0") {
  Rng rng(5);
  const RandomState st = make_random_state(Family::gaussian, rng);
  const int p = st.model.p();
  SparsityPattern z(p);  // identity: every sub-diagonal entry inert
  const Matrix b = random_b(z, st.model.prior.nu, rng);
  const Vector g = grad_log_posterior_b(CholFactor(b), z, st.model, st.latent);
  const BLayout lay(p);
  // column 0 entries have no downstream constrained dependence: forced
  // entries of later columns are built from zeros regardless of b_j0
  for (int j = 1; j < p; ++j)
    CHECK(g(lay.low(j, 0)) == doctest::Approx(-b(j, 0)).epsilon(1e-12));
}

TEST_CASE("zero-data gradient equals the closed-form prior gradient") {
  Rng rng(6);
  const int p = 4;
  const double nu = 2.5;
  ModelSpec model;
  model.prior = SBartlettParams::identity(p, nu);
  model.pi = Matrix::Constant(p, p, 0.5);
  model.y = Matrix(0, p);
  model.observed = BoolArray::Constant(0, p, true);
  LatentState latent;
  latent.y_complete = Matrix(0, p);

  const SparsityPattern z = SparsityPattern::full(p);
  const Matrix b = random_b(z, nu, rng);
  const Vector g = grad_log_posterior_b(CholFactor(b), z, model, latent);
  const BLayout lay(p);
  for (int k = 0; k < p; ++k)
    CHECK(g(lay.diag(k)) ==
          doctest::Approx((nu + z.free_count(k)) - b(k, k) * b(k, k)).epsilon(1e-11));
  for (int k = 0; k < p - 1; ++k)
    for (int j = k + 1; j < p; ++j)
      CHECK(g(lay.low(j, k)) == doctest::Approx(-b(j, k)).epsilon(1e-11));
}

TEST_CASE("gradient matches central finite differences on random states") {
  Rng rng(7);
  double worst = 0.0;
  for (int rep = 0; rep < 30; ++rep) {
    const Family family = rep % 2 == 0 ? Family::gaussian : Family::poisson;
    const RandomState st = make_random_state(family, rng);
    const Vector theta = pack_b(st.b);
    const auto f = [&](const Vector& th) {
      return log_posterior_b(CholFactor(unpack_b(th)), st.z, st.model, st.latent);
    };
    const Vector g =
        grad_log_posterior_b(CholFactor(st.b), st.z, st.model, st.latent);
    const Vector fd = oracle::finite_difference_gradient(f, theta, 1e-5);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double denom = std::max({1.0, std::abs(g(i)), std::abs(fd(i))});
      worst = std::max(worst, std::abs(g(i) - fd(i)) / denom);
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("impute_missing_gaussian conditional moments") {
  Rng rng(8);
  Matrix lam(2, 2);
  lam << 2.0, -1.0, -1.0, 2.0;
  const CholFactor q = cholesky(SpdMatrix::from_symmetric(lam));
  Vector row(2);
  row << 1.0, 0.0;
  const std::vector<bool> obs{true, false};
  const int draws = 20000;
  double sum = 0.0, sumsq = 0.0;
  for (int rep = 0; rep < draws; ++rep) {
    const Vector out = impute_missing_gaussian(q, row, obs, rng);
    CHECK(out(0) == 1.0);
    sum += out(1);
    sumsq += out(1) * out(1);
  }
  const double mean = sum / draws;
  const double var = sumsq / draws - mean * mean;
  // Y_2 | Y_1 = 1 ~ N(0.5, 0.5)
  CHECK(std::abs(mean - 0.5) < 0.02);
  CHECK(std::abs(var - 0.5) < 0.03);
}

TEST_CASE("impute_missing_gaussian edge cases") {
  Rng rng(9);
  const CholFactor q(3);

  // no missing entries: row returned unchanged
  Vector row(3);
  row << 0.4, -0.2, 1.1;
  const std::vector<bool> all_obs{true, true, true};
  CHECK(impute_missing_gaussian(q, row, all_obs, rng) == row);

  // identity precision: missing draw independent of observed values
  const std::vector<bool> obs{true, false, true};
  const int draws = 20000;
  double sum = 0.0, sumsq = 0.0;
  for (int rep = 0; rep < draws; ++rep) {
    const double v = impute_missing_gaussian(q, row, obs, rng)(1);
    sum += v;
    sumsq += v * v;
  }
  CHECK(std::abs(sum / draws) < 0.03);
  CHECK(std::abs(sumsq / draws - 1.0) < 0.04);

  // all-missing row: unconditional N(0, Lambda^{-1}) draw
  Matrix lam(2, 2);
  lam << 2.0, -1.0, -1.0, 2.0;
  const CholFactor q2 = cholesky(SpdMatrix::from_symmetric(lam));
  const std::vector<bool> none{false, false};
  Matrix acc = Matrix::Zero(2, 2);
  Vector zero = Vector::Zero(2);
  for (int rep = 0; rep < draws; ++rep) {
    const Vector v = impute_missing_gaussian(q2, zero, none, rng);
    acc += v * v.transpose();
  }
  acc /= draws;
  const Matrix cov = lam.inverse();
  CHECK((acc - cov).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("impute_missing_gaussian two-cell block against dense conditioning") {
  Rng rng(12);
  Matrix l(3, 3);
  l << 1.2, 0.0, 0.0, -0.4, 0.9, 0.0, 0.3, 0.5, 1.1;
  const SpdMatrix lam = chol_product(CholFactor(l));
  const CholFactor q = cholesky(lam);
  Vector row(3);
  row << 0.7, 0.0, 0.0;
  const std::vector<bool> obs{true, false, false};

  // oracle: condition the covariance on the observed coordinate
  const Matrix cov = lam.matrix().inverse();
  Vector y_obs(1);
  y_obs << 0.7;
  const auto cond =
      oracle::condition_gaussian_dense(Vector::Zero(3), cov, {1, 2}, {0}, y_obs);

  const int draws = 40000;
  Vector mean = Vector::Zero(2);
  Matrix sq = Matrix::Zero(2, 2);
  for (int rep = 0; rep < draws; ++rep) {
    const Vector out = impute_missing_gaussian(q, row, obs, rng);
    Vector m(2);
    m << out(1), out(2);
    mean += m;
    sq += m * m.transpose();
  }
  mean /= draws;
  const Matrix cov_hat = sq / draws - mean * mean.transpose();
  CHECK((mean - cond.mean).cwiseAbs().maxCoeff() < 0.02);
  CHECK((cov_hat - cond.cov).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("impute_missing_poisson") {
  Rng rng(10);
  LatentState latent;
  latent.w = Matrix::Zero(1, 2);
  latent.mu = Vector::Zero(2);

  const int draws = 20000;
  double sum = 0.0;
  for (int rep = 0; rep < draws; ++rep) sum += impute_missing_poisson(latent, 0, 0, rng);
  CHECK(std::abs(sum / draws - 1.0) < 0.03);  // rate exp(0) = 1

  latent.mu(1) = -60.0;  // vanishing rate: always zero
  for (int rep = 0; rep < 50; ++rep)
    CHECK(impute_missing_poisson(latent, 0, 1, rng) == 0.0);

  latent.mu(1) = 31.0;
  CHECK_THROWS_AS(impute_missing_poisson(latent, 0, 1, rng), OverflowError);
}

TEST_CASE("likelihood part is invariant to every inert coordinate") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const Family family = rep % 2 == 0 ? Family::gaussian : Family::poisson;
    RandomState st = make_random_state(family, rng);
    const double lik_before =
        log_posterior_b(CholFactor(st.b), st.z, st.model, st.latent) -
        log_prior_b(CholFactor(st.b), st.z, st.model.prior.nu);
    Matrix b2 = st.b;
    for (int k = 0; k < st.model.p() - 1; ++k)
      for (int j = k + 1; j < st.model.p(); ++j)
        if (!st.z(j, k)) b2(j, k) += rng.normal();
    const double lik_after =
        log_posterior_b(CholFactor(b2), st.z, st.model, st.latent) -
        log_prior_b(CholFactor(b2), st.z, st.model.prior.nu);
    CHECK(std::abs(lik_after - lik_before) < 1e-9);
  }
}

TEST_CASE("model validation rejects bad inputs") {
  ModelSpec model;
  model.prior = SBartlettParams::identity(2, 3.0);
  model.pi = Matrix::Constant(2, 2, 0.5);
  model.y = Matrix::Zero(3, 2);
  model.observed = BoolArray::Constant(3, 2, true);
  CHECK_NOTHROW(model.validate());

  // all-missing column
  ModelSpec bad = model;
  bad.observed.col(1).setConstant(false);
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  // non-integer Poisson counts
  ModelSpec pois = model;
  pois.family = Family::poisson;
  pois.y(1, 0) = 2.5;
  CHECK_THROWS_AS(pois.validate(), ValidationError);

  // pi out of range
  ModelSpec badpi = model;
  badpi.pi(1, 0) = badpi.pi(0, 1) = 1.5;
  CHECK_THROWS_AS(badpi.validate(), ValidationError);
}
