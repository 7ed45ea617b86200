#include "sbart/sim.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace sbart {

void SimScenario::validate() const {
  if (p < 2) throw ValidationError("scenario: p must be >= 2");
  if (n < 0) throw ValidationError("scenario: n must be >= 0");
  if (!(pmiss >= 0.0 && pmiss < 1.0))
    throw ValidationError("scenario: pmiss must be in [0,1)");
  if (replicas < 1) throw ValidationError("scenario: replicas must be >= 1");
  if (!(nu > 0.0)) throw ValidationError("scenario: nu must be positive");
  if (!(pi >= 0.0 && pi <= 1.0))
    throw ValidationError("scenario: pi must be in [0,1]");
  if (pattern.kind == PatternSpec::Kind::band) {
    if (pattern.width < 1 || pattern.width >= p)
      throw ValidationError("scenario: band width must satisfy 1 <= w < p");
  } else {
    if (!(pattern.alpha >= 0.0 && pattern.alpha < 1.0))
      throw ValidationError("scenario: alpha must be in [0,1)");
  }
}

namespace {

/// Lambda* = D Lambda D with D = sqrt(diag(Lambda^{-1})), built symmetric.
SpdMatrix rescale_unit_marginals(const Matrix& lam) {
  Eigen::LLT<Matrix> llt(lam);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("truth rescale: matrix is not positive definite");
  const int p = static_cast<int>(lam.rows());
  const Matrix inv = llt.solve(Matrix::Identity(p, p));
  const Vector d = inv.diagonal().array().sqrt();
  Matrix out(p, p);
  for (int k = 0; k < p; ++k)
    for (int j = k; j < p; ++j) out(j, k) = d(j) * d(k) * lam(j, k);
  return SpdMatrix::from_lower(out);
}

}  // namespace

SpdMatrix banded_truth(int p, int w) {
  if (w < 1 || w >= p)
    throw ValidationError("banded_truth: band width must satisfy 1 <= w < p");
  Matrix lam = Matrix::Identity(p, p);
  const double off = -0.999 / (2.0 * w);
  for (int k = 0; k < p; ++k)
    for (int j = k + 1; j <= std::min(k + w, p - 1); ++j)
      lam(j, k) = lam(k, j) = off;
  return rescale_unit_marginals(lam);
}

std::pair<SpdMatrix, SparsityPattern> random_truth(int p, double alpha,
                                                   const SBartlettParams& prior,
                                                   Rng& rng) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw ValidationError("random_truth: alpha must be in [0,1)");
  if (prior.dim() != p)
    throw ValidationError("random_truth: prior dimension mismatch");
  SparsityPattern z(p);
  for (int k = 0; k < p - 1; ++k)
    for (int j = k + 1; j < p; ++j)
      if (rng.uniform() >= alpha) z.set(j, k, true);
  const CholFactor q = sample_prior(prior, z, rng);
  return {rescale_unit_marginals(chol_product(q).matrix()), z};
}

SimData simulate_data(const SpdMatrix& truth, const SimScenario& scenario,
                      Rng& rng) {
  const int p = truth.dim();
  const int n = scenario.n;
  if (p != scenario.p)
    throw ValidationError("simulate_data: truth dimension does not match scenario");
  const CholFactor chol = cholesky(truth);
  const auto upper = chol.matrix().transpose().triangularView<Eigen::Upper>();

  SimData out;
  out.observed = BoolArray::Constant(n, p, true);
  Vector eta(p);
  if (scenario.family == Family::gaussian) {
    out.y_full = Matrix(n, p);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) eta(j) = rng.normal();
      out.y_full.row(i) =
          (Vector::Constant(p, scenario.mu) + upper.solve(eta)).transpose();
    }
  } else {
    out.w_true = Matrix(n, p);
    out.y_full = Matrix(n, p);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) eta(j) = rng.normal();
      out.w_true.row(i) = upper.solve(eta).transpose();
      for (int j = 0; j < p; ++j)
        out.y_full(i, j) = static_cast<double>(
            rng.poisson(std::exp(scenario.mu + out.w_true(i, j))));
    }
  }

  if (scenario.pmiss > 0.0 && n > 0) {
    if (scenario.rowwise_missing) {
      const int m = static_cast<int>(std::llround(scenario.pmiss * n));
      std::vector<int> rows(n);
      for (int i = 0; i < n; ++i) rows[i] = i;
      for (int i = 0; i < m; ++i) {
        std::swap(rows[i], rows[i + rng.uniform_int(n - i)]);
        out.observed.row(rows[i]).setConstant(false);
      }
    } else {
      const long long cells = static_cast<long long>(n) * p;
      const long long m = std::llround(scenario.pmiss * static_cast<double>(cells));
      std::vector<long long> idx(cells);
      for (long long c = 0; c < cells; ++c) idx[c] = c;
      for (long long c = 0; c < m; ++c) {
        std::swap(idx[c], idx[c + rng.uniform_int(static_cast<int>(cells - c))]);
        out.observed(idx[c] / p, idx[c] % p) = false;
      }
    }
  }
  return out;
}

namespace {

MetricAggregate aggregate_metric(const std::vector<double>& values) {
  MetricAggregate agg;
  if (values.empty()) return agg;
  double sum = 0.0;
  for (double v : values) sum += v;
  agg.mean = sum / static_cast<double>(values.size());
  agg.median = quantile(values, 0.5);
  agg.lo = quantile(values, 0.025);
  agg.hi = quantile(values, 0.975);
  return agg;
}

ReplicaReport run_replica(const SimScenario& scenario, const ChainOptions& sampler,
                          int r) {
  ReplicaReport rep;
  rep.replica = r;
  rep.seed = scenario.seed ^ static_cast<std::uint64_t>(r);
  try {
    Rng rng(rep.seed);
    const SBartlettParams prior =
        SBartlettParams::identity(scenario.p, scenario.nu);

    SpdMatrix truth;
    SparsityPattern z_true(scenario.p);
    if (scenario.pattern.kind == PatternSpec::Kind::band) {
      truth = banded_truth(scenario.p, scenario.pattern.width);
      for (int k = 0; k < scenario.p; ++k)
        for (int j = k + 1; j <= std::min(k + scenario.pattern.width, scenario.p - 1); ++j)
          z_true.set(j, k, true);
    } else {
      std::tie(truth, z_true) =
          random_truth(scenario.p, scenario.pattern.alpha, prior, rng);
    }

    const SimData data = simulate_data(truth, scenario, rng);

    ModelSpec model;
    model.family = scenario.family;
    model.y = data.y_full;
    model.observed = data.observed;
    model.pi = Matrix::Constant(scenario.p, scenario.p, scenario.pi);
    model.prior = prior;

    ChainOptions opts = sampler;
    opts.seed = rng.next_u64();

    std::vector<SampleRecord> samples;
    const auto cells = model.missing_cells();
    std::vector<std::vector<double>> draws(cells.size());
    run_chain(model, opts, [&](const SampleRecord& rec) {
      samples.push_back(rec);
      for (std::size_t c = 0; c < cells.size(); ++c)
        draws[c].push_back(rec.imputed(c));
    });
    const PosteriorSummary summary = summarize(samples);

    rep.eval.sensitivity = sensitivity(z_true, summary.z_decided);
    rep.eval.specificity = specificity(z_true, summary.z_decided);
    rep.eval.kl_discrepancy =
        kl_discrepancy(SpdMatrix::from_lower(summary.lambda_hat), truth);
    if (!cells.empty()) {
      double crps_sum = 0.0;
      for (std::size_t c = 0; c < cells.size(); ++c)
        crps_sum += crps_empirical(draws[c],
                                   data.y_full(cells[c].first, cells[c].second));
      rep.eval.crps_mean = crps_sum / static_cast<double>(cells.size());
    } else {
      rep.eval.crps_mean = std::numeric_limits<double>::quiet_NaN();
    }
    rep.eval.edge_count_mean = summary.edge_count_mean;
    rep.eval.edge_count_lo = summary.edge_count_lo;
    rep.eval.edge_count_hi = summary.edge_count_hi;
    rep.ok = true;
  } catch (const std::exception& e) {
    rep.ok = false;
    rep.error = e.what();
  }
  return rep;
}

}  // namespace

StudyResult run_study(const SimScenario& scenario, const ChainOptions& sampler,
                      int threads) {
  scenario.validate();
  StudyResult result;
  result.replicas.resize(scenario.replicas);

  if (threads <= 1) {
    for (int r = 0; r < scenario.replicas; ++r)
      result.replicas[r] = run_replica(scenario, sampler, r);
  } else {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= scenario.replicas) break;
        result.replicas[r] = run_replica(scenario, sampler, r);
      }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::min(threads, scenario.replicas);
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<double> sens, spec, kl, crps, edges;
  for (const ReplicaReport& rep : result.replicas) {
    if (!rep.ok) continue;
    ++result.aggregate.n_ok;
    sens.push_back(rep.eval.sensitivity);
    spec.push_back(rep.eval.specificity);
    kl.push_back(rep.eval.kl_discrepancy);
    if (std::isfinite(rep.eval.crps_mean)) crps.push_back(rep.eval.crps_mean);
    edges.push_back(rep.eval.edge_count_mean);
  }
  result.aggregate.sensitivity = aggregate_metric(sens);
  result.aggregate.specificity = aggregate_metric(spec);
  result.aggregate.kl = aggregate_metric(kl);
  result.aggregate.crps = aggregate_metric(crps);
  result.aggregate.edges = aggregate_metric(edges);
  return result;
}

}  // namespace sbart
