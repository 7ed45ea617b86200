#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sbart/mcmc.hpp"
#include "sbart/metrics.hpp"

namespace sbart {

/// Ground-truth sparsity layout for simulation studies.
struct PatternSpec {
  enum class Kind { band, random };
  Kind kind = Kind::band;
  int width = 1;       // band half-width w
  double alpha = 0.0;  // probability a sub-diagonal entry is zero
};

struct SimScenario {
  int p = 10;
  PatternSpec pattern{};
  int n = 100;
  Family family = Family::gaussian;
  double mu = 0.0;      // intercept on the linear-predictor scale
  double pmiss = 0.0;   // masked cell fraction, in [0,1)
  int replicas = 20;
  std::uint64_t seed = 0;
  double nu = 3.0;      // prior degrees of freedom (identity scale)
  double pi = 0.5;      // edge prior inclusion probability
  bool rowwise_missing = false;  // mask whole rows instead of cells

  void validate() const;
};

/// Banded precision truth: unit diagonal, -0.999/(2w) within the band, then
/// rescaled as Lambda* = D Lambda D with D = sqrt(diag(Lambda^{-1})) so the
/// implied covariance has unit diagonal.
SpdMatrix banded_truth(int p, int w);

/// Random-pattern truth: each sub-diagonal entry free with probability
/// 1 - alpha, Lambda | Z drawn from the S-Bartlett prior, then rescaled as
/// in banded_truth (the rescale preserves the zero pattern).
std::pair<SpdMatrix, SparsityPattern> random_truth(int p, double alpha,
                                                   const SBartlettParams& prior,
                                                   Rng& rng);

struct SimData {
  Matrix y_full;       // complete simulated outcomes (truth for masked cells)
  BoolArray observed;  // mask
  Matrix w_true;       // latent fields (Poisson only, else 0x0)
};

/// Gaussian: y_i ~ N(mu 1, Lambda*^{-1}); Poisson: w_i ~ N(0, Lambda*^{-1}),
/// y_ij ~ Poisson(exp(mu + w_ij)). Then round(pmiss * n * p) cells are masked
/// uniformly without replacement (whole rows when rowwise_missing is set).
SimData simulate_data(const SpdMatrix& truth, const SimScenario& scenario,
                      Rng& rng);

struct ReplicaReport {
  int replica = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalReport eval;
};

struct MetricAggregate {
  double mean = 0.0;
  double median = 0.0;
  double lo = 0.0;  // 2.5%
  double hi = 0.0;  // 97.5%
};

struct StudyAggregate {
  MetricAggregate sensitivity, specificity, kl, crps, edges;
  int n_ok = 0;
};

struct StudyResult {
  std::vector<ReplicaReport> replicas;
  StudyAggregate aggregate;
};

/// Full simulation study: per replica, generate truth and data, run the
/// chain, summarize, and score against the truth. Replica r uses the stream
/// seeded with scenario.seed XOR r; failed replicas are flagged, not fatal.
/// Deterministic given (scenario, sampler options), including under threads.
StudyResult run_study(const SimScenario& scenario, const ChainOptions& sampler,
                      int threads = 1);

}  // namespace sbart
