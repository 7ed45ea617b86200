#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sbart/mcmc.hpp"
#include "support/oracles.hpp"

using namespace sbart;

namespace {

struct StdNormalTarget final : LogDensity {
  double value_and_grad(const Vector& x, Vector& grad) const override {
    grad = -x;
    return -0.5 * x.squaredNorm();
  }
};

ModelSpec gaussian_model(const Matrix& y, double nu = 3.0, double pi = 0.5) {
  ModelSpec model;
  model.family = Family::gaussian;
  model.y = y;
  model.observed = BoolArray::Constant(y.rows(), y.cols(), true);
  model.pi = Matrix::Constant(y.cols(), y.cols(), pi);
  model.prior = SBartlettParams::identity(static_cast<int>(y.cols()), nu);
  return model;
}

/// Exact P(z_21 = 1 | y) for p = 2, n = 1, S = I by enumeration of the two
/// configurations with the mixed 1-D quadrature oracle: integrating the
/// Gaussian b_21 in closed form leaves one expectation over each squared
/// diagonal, E[sqrt(G) exp(-c G)] with G ~ Gamma(shape, 1/2).
double exact_edge_posterior(double y1, double y2, double nu, double pi) {
  const auto sqrt_gamma_moment = [&](double c, double shape) {
    const auto integrand = [&](double g) {
      if (g <= 0.0) return 0.0;
      return std::sqrt(g) * std::exp(-c * g + (shape - 1.0) * std::log(g) -
                                     0.5 * g + shape * std::log(0.5) -
                                     std::lgamma(shape));
    };
    // panels keep the adaptive rule from terminating on the flat tail
    const double knots[] = {0.0, 2.0, 6.0, 15.0, 60.0, 400.0};
    double total = 0.0;
    for (int i = 0; i + 1 < 6; ++i)
      total += oracle::adaptive_simpson(integrand, knots[i], knots[i + 1], 1e-13);
    // sanity: the same moment in closed form,
    // (1/2)^a Gamma(a + 1/2) / Gamma(a) (1/2 + c)^{-(a+1/2)}
    const double closed = std::exp(shape * std::log(0.5) +
                                   std::lgamma(shape + 0.5) - std::lgamma(shape) -
                                   (shape + 0.5) * std::log(0.5 + c));
    REQUIRE(std::abs(total - closed) < 1e-10 * closed);
    return total;
  };
  // m1 / m0, common b_22 factor cancels
  const double c1 = y1 * y1 / (2.0 * (1.0 + y2 * y2));
  const double r = (1.0 / std::sqrt(1.0 + y2 * y2)) *
                   sqrt_gamma_moment(c1, 0.5 * (nu + 1.0)) /
                   sqrt_gamma_moment(0.5 * y1 * y1, 0.5 * nu);
  return pi * r / (pi * r + (1.0 - pi));
}

}  // namespace

TEST_CASE("nuts targets a standard normal with the requested acceptance") {
  NutsConfig cfg;
  cfg.m_adapt = 500;
  cfg.delta = 0.5;
  NutsSampler sampler(cfg);
  StdNormalTarget target;
  Rng rng(21);
  Vector x = Vector::Zero(5);
  for (int it = 0; it < 500; ++it) sampler.step(target, x, rng);
  CHECK(sampler.step_size() > 0.0);

  double accept_sum = 0.0;
  Matrix sum = Matrix::Zero(5, 2);
  const int iters = 4000;
  for (int it = 0; it < iters; ++it) {
    const NutsStats st = sampler.step(target, x, rng);
    accept_sum += st.accept_stat;
    sum.col(0) += x;
    sum.col(1) += x.cwiseProduct(x);
  }
  const double accept = accept_sum / iters;
  CHECK(accept > 0.4);
  CHECK(accept < 0.6);
  CHECK((sum.col(0) / iters).cwiseAbs().maxCoeff() < 0.12);
  for (int d = 0; d < 5; ++d) {
    const double var = sum(d, 1) / iters;
    CHECK(var > 0.85);
    CHECK(var < 1.15);
  }
  // a 0.5 target drives the step size to the stability edge; stray
  // divergences are expected but must stay rare
  CHECK(static_cast<double>(sampler.divergences()) < 0.02 * iters);
}

TEST_CASE("nuts with fixed step size shows no drift on a Gaussian target") {
  NutsConfig cfg;
  cfg.m_adapt = 0;  // no adaptation: fixed step size throughout
  cfg.initial_step = 0.7;
  NutsSampler sampler(cfg);
  StdNormalTarget target;
  Rng rng(22);
  Vector x = Vector::Zero(1);
  double sum = 0.0, sumsq = 0.0;
  const int iters = 100000;
  for (int it = 0; it < iters; ++it) {
    sampler.step(target, x, rng);
    sum += x(0);
    sumsq += x(0) * x(0);
  }
  CHECK(sampler.step_size() == 0.7);
  CHECK(std::abs(sum / iters) < 0.04);
  CHECK(std::abs(sumsq / iters - 1.0) < 0.05);
}

TEST_CASE("auto step size heuristic initializes on first use") {
  NutsConfig cfg;
  cfg.initial_step = 0.0;
  NutsSampler sampler(cfg);
  StdNormalTarget target;
  Rng rng(23);
  Vector x = Vector::Constant(3, 0.5);
  sampler.step(target, x, rng);
  CHECK(sampler.step_size() > 1e-6);
  CHECK(sampler.step_size() < 1e4);
}

TEST_CASE("nuts draws from the augmented prior pass a normality check") {
  // zero observations: the B posterior is the Bartlett prior, whose
  // sub-diagonal coordinates are standard normal
  ModelSpec model = gaussian_model(Matrix::Zero(0, 3));
  LatentState latent;
  latent.y_complete = Matrix::Zero(0, 3);
  BartlettTransform t(model.prior, SparsityPattern::full(3));
  BPosterior post(&t);
  post.set_data(latent.y_complete);

  struct Adapter final : LogDensity {
    const BPosterior* post;
    double value_and_grad(const Vector& x, Vector& grad) const override {
      return post->value_and_grad(x, grad);
    }
  } target;
  target.post = &post;

  NutsConfig cfg;
  cfg.m_adapt = 500;
  NutsSampler sampler(cfg);
  Rng rng(24);
  Vector x = Vector::Zero(BLayout(3).dim());
  for (int it = 0; it < 500; ++it) sampler.step(target, x, rng);
  std::vector<double> b21;
  b21.reserve(10000);
  for (int it = 0; it < 10000; ++it) {
    sampler.step(target, x, rng);
    b21.push_back(x(BLayout(3).low(1, 0)));
  }
  const double d = oracle::ks_statistic(b21, oracle::normal_cdf);
  CHECK(d < oracle::ks_quantile(0.001) / std::sqrt(10000.0));
}

TEST_CASE("gibbs sweep obeys degenerate inclusion priors") {
  Rng data_rng(25);
  Matrix y(6, 3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) y(i, j) = data_rng.normal();

  for (double pi : {1.0, 0.0}) {
    ModelSpec model = gaussian_model(y, 3.0, pi);
    ChainOptions opts;
    opts.iterations = 20;
    opts.burn_in = 10;
    opts.seed = 99;
    const ChainResult res = run_chain(model, opts);
    for (const SampleRecord& rec : res.samples)
      CHECK(rec.edge_count == (pi == 1.0 ? 3 : 0));
  }
}

TEST_CASE("gibbs edge frequency matches the enumeration-quadrature oracle") {
  const double nu = 3.0, pi = 0.5;
  const double y1 = 1.4, y2 = -0.6;
  const double target = exact_edge_posterior(y1, y2, nu, pi);

  Matrix y(1, 2);
  y << y1, y2;
  ModelSpec model = gaussian_model(y, nu, pi);
  ChainOptions opts;
  opts.iterations = 12000;
  opts.burn_in = 2000;
  opts.seed = 4242;
  opts.nuts.m_adapt = 200;

  std::vector<double> inc;
  inc.reserve(10000);
  run_chain(model, opts, [&](const SampleRecord& rec) {
    inc.push_back(rec.z(1, 0) ? 1.0 : 0.0);
  });
  double freq = 0.0;
  for (double v : inc) freq += v;
  freq /= static_cast<double>(inc.size());
  const double se = oracle::batch_means_se(inc);
  CHECK(std::abs(freq - target) < 3.0 * std::max(se, 1e-4));
}

TEST_CASE("chains are deterministic given the seed") {
  Rng data_rng(26);
  Matrix y(10, 3);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 3; ++j) y(i, j) = data_rng.normal();
  ModelSpec model = gaussian_model(y);
  model.observed(2, 1) = false;
  model.observed(7, 0) = false;

  ChainOptions opts;
  opts.iterations = 60;
  opts.burn_in = 20;
  opts.thinning = 2;
  opts.seed = 777;

  const ChainResult a = run_chain(model, opts);
  const ChainResult b = run_chain(model, opts);
  REQUIRE(a.samples.size() == b.samples.size());
  CHECK(a.samples.size() == 20);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].lambda == b.samples[i].lambda);
    CHECK(a.samples[i].z == b.samples[i].z);
    CHECK(a.samples[i].log_posterior == b.samples[i].log_posterior);
    CHECK(a.samples[i].imputed == b.samples[i].imputed);
  }
}

TEST_CASE("recorded draws are PD and pattern-consistent") {
  Rng data_rng(27);
  Matrix y(20, 4);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 4; ++j) y(i, j) = data_rng.normal();
  ModelSpec model = gaussian_model(y);
  ChainOptions opts;
  opts.iterations = 150;
  opts.burn_in = 50;
  opts.seed = 5;
  const ChainResult res = run_chain(model, opts);
  REQUIRE(res.samples.size() == 100);
  for (const SampleRecord& rec : res.samples) {
    CHECK_NOTHROW(cholesky(SpdMatrix::from_symmetric(rec.lambda)));
    const double scale = rec.lambda.diagonal().maxCoeff();
    for (int k = 0; k < 4; ++k)
      for (int j = k + 1; j < 4; ++j)
        if (!rec.z(j, k)) CHECK(std::abs(rec.lambda(j, k)) < 1e-10 * scale);
    CHECK(std::isfinite(rec.log_posterior));
  }
}

TEST_CASE("latent row target gradient matches finite differences") {
  Rng rng(29);
  const int p = 4;
  Matrix l = Matrix::Zero(p, p);
  for (int k = 0; k < p; ++k) {
    l(k, k) = 0.8 + rng.uniform();
    for (int j = k + 1; j < p; ++j) l(j, k) = 0.4 * rng.normal();
  }
  const Matrix lam = chol_product(CholFactor(l)).matrix();

  ModelSpec model;
  model.family = Family::poisson;
  model.y = Matrix(2, p);
  model.observed = BoolArray::Constant(2, p, true);
  model.observed(0, 2) = false;  // one masked cell drops out of the target
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < p; ++j) model.y(i, j) = static_cast<double>(rng.poisson(3.0));
  model.pi = Matrix::Constant(p, p, 0.5);
  model.prior = SBartlettParams::identity(p, 3.0);
  Vector mu(p);
  for (int j = 0; j < p; ++j) mu(j) = 0.4 * rng.normal();

  for (int row = 0; row < 2; ++row) {
    const LatentRowTarget target(&lam, &model, &mu, row);
    Vector w(p), grad(p);
    for (int j = 0; j < p; ++j) w(j) = 0.8 * rng.normal();
    const double v = target.value_and_grad(w, grad);
    CHECK(std::isfinite(v));
    const auto f = [&](const Vector& x) {
      Vector g(p);
      return target.value_and_grad(x, g);
    };
    const Vector fd = oracle::finite_difference_gradient(f, w, 1e-6);
    for (int j = 0; j < p; ++j) {
      const double denom = std::max({1.0, std::abs(grad(j)), std::abs(fd(j))});
      CHECK(std::abs(grad(j) - fd(j)) / denom < 1e-6);
    }
  }
}

TEST_CASE("poisson chain runs and imputes counts") {
  Rng data_rng(28);
  const int n = 15, p = 3;
  Matrix y(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) y(i, j) = static_cast<double>(data_rng.poisson(2.0));
  ModelSpec model = gaussian_model(y);
  model.family = Family::poisson;
  model.observed(3, 1) = false;
  model.observed(8, 2) = false;
  ChainOptions opts;
  opts.iterations = 80;
  opts.burn_in = 30;
  opts.seed = 31;
  const ChainResult res = run_chain(model, opts);
  REQUIRE(res.samples.size() == 50);
  for (const SampleRecord& rec : res.samples) {
    REQUIRE(rec.imputed.size() == 2);
    for (Eigen::Index c = 0; c < rec.imputed.size(); ++c) {
      CHECK(rec.imputed(c) >= 0.0);
      CHECK(rec.imputed(c) == std::floor(rec.imputed(c)));
    }
  }
  // determinism holds for the Poisson path too
  const ChainResult res2 = run_chain(model, opts);
  CHECK(res.samples.back().lambda == res2.samples.back().lambda);
  CHECK(res.samples.back().imputed == res2.samples.back().imputed);
}

TEST_CASE("mis-scaled data triggers the all-divergent guard") {
  Matrix y = Matrix::Constant(4, 2, 1e160);
  ModelSpec model = gaussian_model(y);
  ChainOptions opts;
  opts.iterations = 40;
  opts.burn_in = 10;
  opts.seed = 1;
  opts.nuts.m_adapt = 5;
  CHECK_THROWS_AS(run_chain(model, opts), AllDivergentError);
}

TEST_CASE("summarize aggregates draws and applies the tie rule") {
  SampleRecord a;
  a.iteration = 1;
  a.lambda = Matrix::Identity(2, 2);
  a.z = SparsityPattern(2);
  a.edge_count = 0;
  a.log_posterior = -1.0;

  CHECK_THROWS_AS(summarize({}), EmptyChainError);

  // all samples identical: degenerate interval
  std::vector<SampleRecord> same(5, a);
  const PosteriorSummary s1 = summarize(same);
  CHECK(s1.lambda_hat == a.lambda);
  CHECK(s1.edge_count_mean == 0.0);
  CHECK(s1.edge_count_lo == 0.0);
  CHECK(s1.edge_count_hi == 0.0);
  CHECK_FALSE(s1.z_decided(1, 0));

  // alternating pattern: zhat = 0.5, tie resolves to edge ON
  SampleRecord b = a;
  b.z.set(1, 0, true);
  b.edge_count = 1;
  Matrix dense(2, 2);
  dense << 1.0, 0.4, 0.4, 1.0;
  b.lambda = dense;
  std::vector<SampleRecord> alt{a, b, a, b};
  const PosteriorSummary s2 = summarize(alt);
  CHECK(s2.zhat(1, 0) == 0.5);
  CHECK(s2.z_decided(1, 0));
  CHECK(s2.edge_count_mean == 0.5);

  // 0.49 stays below a 0.5 threshold
  std::vector<SampleRecord> mostly;
  for (int i = 0; i < 100; ++i) mostly.push_back(i < 49 ? b : a);
  const PosteriorSummary s3 = summarize(mostly);
  CHECK(s3.zhat(1, 0) == doctest::Approx(0.49));
  CHECK_FALSE(s3.z_decided(1, 0));
}

TEST_CASE("chain options validation") {
  ChainOptions opts;
  opts.iterations = 100;
  opts.burn_in = 100;
  CHECK_THROWS_AS(opts.validate(), ValidationError);
  opts.burn_in = 50;
  opts.thinning = 0;
  CHECK_THROWS_AS(opts.validate(), ValidationError);
  opts.thinning = 1;
  opts.nuts.max_tree_depth = 13;
  CHECK_THROWS_AS(opts.validate(), ValidationError);
}
