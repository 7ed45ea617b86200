#pragma once

#include <functional>
#include <vector>

#include "sbart/nuts.hpp"
#include "sbart/posterior.hpp"

namespace sbart {

struct ChainOptions {
  int iterations = 10000;
  int burn_in = 8000;
  int thinning = 1;
  std::uint64_t seed = 0;
  NutsConfig nuts{};
  bool randomized_sweep = false;
  double mu_step = 0.1;  // random-walk scale for Poisson intercepts

  void validate() const;
};

/// One retained draw of the chain.
struct SampleRecord {
  int iteration = 0;
  Matrix lambda;  // symmetric p x p draw of the precision matrix
  SparsityPattern z;
  int edge_count = 0;
  double log_posterior = 0.0;
  Vector imputed;  // values at the model's missing cells, fixed order
};

struct ChainDiagnostics {
  long long transitions_b = 0;
  long long divergences_b = 0;
  long long post_adapt_transitions_b = 0;
  long long post_adapt_divergences_b = 0;
  double step_size_b = 0.0;
  double mean_accept_b = 0.0;
  long long divergences_w = 0;
  double mu_accept_rate = 0.0;
};

struct PosteriorSummary {
  Matrix lambda_hat;  // mean of Lambda draws
  Matrix zhat;        // mean of Z draws (diagonal 1)
  SparsityPattern z_decided;
  double edge_count_mean = 0.0;
  double edge_count_lo = 0.0;  // empirical 2.5% quantile
  double edge_count_hi = 0.0;  // empirical 97.5% quantile
  int n_samples = 0;
};

/// The full estimation engine for one chain: NUTS over the packed B
/// coordinates, a spike-and-slab Gibbs sweep over Z, and the family-specific
/// latent updates (Gaussian imputation, or Poisson latent-field NUTS plus
/// intercept Metropolis plus count imputation). Owns its state exclusively;
/// parallel chains use separate engines with independent seeds.
class ChainEngine {
 public:
  ChainEngine(const ModelSpec& model, const ChainOptions& opts);

  /// One full iteration: B update, Z sweep, latent updates.
  void step();

  void nuts_update_b();
  void gibbs_update_z();
  void update_latent();

  const Matrix& b() const { return b_; }
  const Matrix& q() const { return q_; }
  const SparsityPattern& z() const { return transform_.pattern(); }
  const LatentState& latent() const { return latent_; }
  SpdMatrix lambda() const { return chol_product(CholFactor(q_)); }
  double log_posterior() const;
  SampleRecord make_record(int iteration) const;
  ChainDiagnostics diagnostics() const;
  Rng& rng() { return rng_; }

 private:
  void refresh_data_cache();
  const Matrix& bdata() const;
  void update_latent_gaussian();
  void update_latent_poisson();

  const ModelSpec* model_;
  ChainOptions opts_;
  BartlettTransform transform_;
  LatentState latent_;
  Vector theta_;
  Matrix b_, q_;
  BPosterior bpost_;
  NutsSampler nuts_b_;
  NutsSampler nuts_w_;
  Rng rng_;
  std::vector<std::pair<int, int>> missing_cells_;
  long long mu_proposals_ = 0;
  long long mu_accepts_ = 0;
  Matrix lambda_ws_, q_ws1_, q_ws0_;
  std::vector<double> colnorm2_;
};

/// Conditional of one latent row w_i given (Lambda, mu, y_i): Poisson terms
/// over the observed cells plus the N(0, Lambda^{-1}) prior.
class LatentRowTarget final : public LogDensity {
 public:
  LatentRowTarget(const Matrix* lambda, const ModelSpec* model, const Vector* mu,
                  int row)
      : lambda_(lambda), model_(model), mu_(mu), row_(row) {}

  void set_row(int row) { row_ = row; }
  double value_and_grad(const Vector& w, Vector& grad) const override;

 private:
  const Matrix* lambda_;
  const ModelSpec* model_;
  const Vector* mu_;
  int row_;
};

struct ChainResult {
  std::vector<SampleRecord> samples;
  ChainDiagnostics diagnostics;
};

/// Run one chain and stream post-burn-in thinned records to the sink.
/// Deterministic given (model, options, seed). Throws AllDivergentError when
/// more than 90% of post-adaptation B transitions diverge.
ChainDiagnostics run_chain(const ModelSpec& model, const ChainOptions& opts,
                           const std::function<void(const SampleRecord&)>& sink);

ChainResult run_chain(const ModelSpec& model, const ChainOptions& opts);

/// Posterior summary: mean Lambda, mean Z, thresholded pattern (zhat >=
/// threshold keeps the edge), and the mean and empirical 95% interval of the
/// per-draw edge count. Throws EmptyChainError on an empty sequence.
PosteriorSummary summarize(const std::vector<SampleRecord>& samples,
                           double threshold = 0.5);

/// Streaming form of summarize() for record sinks that do not retain draws.
class SummaryAccumulator {
 public:
  void add(const SampleRecord& rec);
  /// Throws EmptyChainError when nothing was accumulated.
  PosteriorSummary finalize(double threshold = 0.5) const;

 private:
  Matrix lambda_sum_, z_sum_;
  std::vector<double> edges_;
};

/// Linear-interpolation empirical quantile (q in [0,1]).
double quantile(std::vector<double> values, double q);

}  // namespace sbart
