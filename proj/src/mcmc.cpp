#include "sbart/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sbart/densities.hpp"

namespace sbart {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPoissonLinpredMax = 30.0;

struct BTargetAdapter final : LogDensity {
  const BPosterior* post;
  explicit BTargetAdapter(const BPosterior* p) : post(p) {}
  double value_and_grad(const Vector& x, Vector& grad) const override {
    return post->value_and_grad(x, grad);
  }
};

double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

double LatentRowTarget::value_and_grad(const Vector& w, Vector& grad) const {
  grad.noalias() = -(*lambda_) * w;
  double v = 0.5 * w.dot(grad);  // -1/2 w^T Lambda w
  for (int j = 0; j < model_->p(); ++j) {
    if (!model_->observed(row_, j)) continue;
    const double eta = (*mu_)(j) + w(j);
    if (eta > 700.0) return kNegInf;
    const double rate = std::exp(eta);
    v += model_->y(row_, j) * eta - rate;
    grad(j) += model_->y(row_, j) - rate;
  }
  return v;
}

void ChainOptions::validate() const {
  if (iterations <= burn_in)
    throw ValidationError("chain: iterations must exceed burn_in");
  if (burn_in < 0) throw ValidationError("chain: burn_in must be >= 0");
  if (thinning < 1) throw ValidationError("chain: thinning must be >= 1");
  if (!(mu_step > 0.0)) throw ValidationError("chain: mu_step must be positive");
  nuts.validate();
}

namespace {

SparsityPattern initial_pattern(const ModelSpec& model) {
  const int p = model.p();
  SparsityPattern z(p);
  for (int k = 0; k < p; ++k)
    for (int j = k + 1; j < p; ++j)
      if (model.pi(j, k) >= 0.5) z.set(j, k, true);
  return z;
}

NutsConfig w_nuts_config(const NutsConfig& base, int n_rows) {
  // The latent-field sampler shares one adaptation state across rows; a
  // "transition" is one row update, so the adaptation window is scaled to
  // cover the same number of chain iterations.
  NutsConfig cfg = base;
  cfg.m_adapt = base.m_adapt * std::max(n_rows, 1);
  return cfg;
}

}  // namespace

ChainEngine::ChainEngine(const ModelSpec& model, const ChainOptions& opts)
    : model_(&model),
      opts_(opts),
      transform_(model.prior, initial_pattern(model)),
      bpost_(&transform_),
      nuts_b_(opts.nuts),
      nuts_w_(w_nuts_config(opts.nuts, model.n())),
      rng_(opts.seed) {
  model.validate();
  opts_.validate();
  const int n = model.n();
  const int p = model.p();

  theta_ = Vector::Zero(BLayout(p).dim());
  b_ = unpack_b(theta_);
  q_.setZero(p, p);
  transform_.apply(b_, q_);

  latent_.y_complete = Matrix::Zero(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j)
      latent_.y_complete(i, j) = model.observed(i, j) ? model.y(i, j) : 0.0;
  if (model.family == Family::poisson) {
    latent_.w = Matrix::Zero(n, p);
    latent_.mu = Vector::Zero(p);
    if (model.fit_intercepts) {
      for (int j = 0; j < p; ++j) {
        double sum = 0.0;
        int count = 0;
        for (int i = 0; i < n; ++i)
          if (model.observed(i, j)) {
            sum += model.y(i, j);
            ++count;
          }
        const double mean = count > 0 ? sum / count : 1.0;
        latent_.mu(j) = std::log(std::max(mean, 0.1));
      }
    }
  }
  missing_cells_ = model.missing_cells();
  refresh_data_cache();
}

const Matrix& ChainEngine::bdata() const {
  return model_->family == Family::gaussian ? latent_.y_complete : latent_.w;
}

void ChainEngine::refresh_data_cache() { bpost_.set_data(bdata()); }

void ChainEngine::nuts_update_b() {
  BTargetAdapter target(&bpost_);
  nuts_b_.step(target, theta_, rng_);
  b_ = unpack_b(theta_);
  transform_.apply(b_, q_);
}

void ChainEngine::gibbs_update_z() {
  const int p = model_->p();
  const Matrix& x = bdata();
  const double nu = model_->prior.nu;

  colnorm2_.assign(p, 0.0);
  for (int c = 0; c < p; ++c) colnorm2_[c] = (x * q_.col(c)).squaredNorm();

  std::vector<std::pair<int, int>> order;
  order.reserve(p * (p - 1) / 2);
  for (int k = 0; k < p - 1; ++k)
    for (int j = k + 1; j < p; ++j) order.emplace_back(j, k);
  if (opts_.randomized_sweep) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng_.uniform_int(i + 1)]);
  }

  std::vector<double> tail1(p), tail0(p);
  for (const auto& [j, k] : order) {
    const double pi_jk = model_->pi(j, k);
    const double bkk2 = b_(k, k) * b_(k, k);
    double base = 0.0;
    for (int c = 0; c < k; ++c) base += colnorm2_[c];

    double lp[2] = {kNegInf, kNegInf};
    bool built[2] = {false, false};
    // Evaluate cfg = 1 then cfg = 0 so a single rebuild suffices when the
    // drawn value is 0.
    for (int cfg : {1, 0}) {
      Matrix& ws = cfg == 1 ? q_ws1_ : q_ws0_;
      std::vector<double>& tail = cfg == 1 ? tail1 : tail0;
      try {
        transform_.set_pattern_entry(j, k, cfg == 1);
      } catch (const NotPositiveDefinite&) {
        continue;
      }
      ws = q_;
      transform_.apply_from_column(b_, k, ws);
      built[cfg] = true;
      double quad = base;
      for (int c = k; c < p; ++c) {
        tail[c] = (x * ws.col(c)).squaredNorm();
        quad += tail[c];
      }
      const double shape = 0.5 * (nu + transform_.pattern().free_count(k));
      const double prior_pi = cfg == 1 ? std::log(pi_jk) : std::log1p(-pi_jk);
      lp[cfg] = prior_pi + gamma_logpdf(bkk2, shape, 0.5) - 0.5 * quad;
    }

    int chosen;
    if (lp[0] == kNegInf && lp[1] == kNegInf) {
      // No admissible configuration evaluated; keep the current value.
      chosen = transform_.pattern()(j, k) ? 1 : 0;
      if (!built[chosen]) continue;  // state untouched
    } else {
      const double lse = logaddexp(lp[0], lp[1]);
      chosen = std::log(std::max(rng_.uniform(), 1e-300)) < lp[1] - lse ? 1 : 0;
    }
    if (transform_.pattern()(j, k) != (chosen == 1))
      transform_.set_pattern_entry(j, k, chosen == 1);
    const Matrix& ws = chosen == 1 ? q_ws1_ : q_ws0_;
    const std::vector<double>& tail = chosen == 1 ? tail1 : tail0;
    q_.rightCols(p - k) = ws.rightCols(p - k);
    for (int c = k; c < p; ++c) colnorm2_[c] = tail[c];
  }
}

void ChainEngine::update_latent() {
  if (model_->family == Family::gaussian)
    update_latent_gaussian();
  else
    update_latent_poisson();
}

void ChainEngine::update_latent_gaussian() {
  if (missing_cells_.empty()) return;
  const int p = model_->p();
  const SpdMatrix lam = lambda();
  std::vector<bool> obs(p);
  for (int i = 0; i < model_->n(); ++i) {
    bool any_missing = false;
    for (int j = 0; j < p; ++j) {
      obs[j] = model_->observed(i, j);
      any_missing = any_missing || !obs[j];
    }
    if (!any_missing) continue;
    latent_.y_complete.row(i) =
        impute_row_gaussian(lam, latent_.y_complete.row(i), obs, rng_).transpose();
  }
  refresh_data_cache();
}

void ChainEngine::update_latent_poisson() {
  const int n = model_->n();
  const int p = model_->p();
  lambda_ws_ = lambda().matrix();

  LatentRowTarget target(&lambda_ws_, model_, &latent_.mu, 0);
  Vector w_row(p), w_old(p);
  for (int i = 0; i < n; ++i) {
    target.set_row(i);
    w_old = latent_.w.row(i);
    w_row = w_old;
    nuts_w_.step(target, w_row, rng_);
    bool ok = true;
    for (int j = 0; j < p; ++j)
      if (latent_.mu(j) + w_row(j) > kPoissonLinpredMax) ok = false;
    if (ok) latent_.w.row(i) = w_row.transpose();
  }

  if (model_->fit_intercepts) {
    for (int j = 0; j < p; ++j) {
      ++mu_proposals_;
      const double mu_old = latent_.mu(j);
      const double mu_new = mu_old + opts_.mu_step * rng_.normal();
      double sum_y = 0.0, sum_exp_w = 0.0, max_w = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) {
        if (!model_->observed(i, j)) continue;
        sum_y += model_->y(i, j);
        sum_exp_w += std::exp(latent_.w(i, j));
      }
      for (int i = 0; i < n; ++i) max_w = std::max(max_w, latent_.w(i, j));
      if (mu_new + max_w > kPoissonLinpredMax) continue;  // keep predictor in range
      const double delta = (mu_new - mu_old) * sum_y -
                           (std::exp(mu_new) - std::exp(mu_old)) * sum_exp_w;
      if (std::log(std::max(rng_.uniform(), 1e-300)) < delta) {
        latent_.mu(j) = mu_new;
        ++mu_accepts_;
      }
    }
  }

  for (const auto& [i, j] : missing_cells_)
    latent_.y_complete(i, j) = impute_missing_poisson(latent_, i, j, rng_);

  refresh_data_cache();
}

void ChainEngine::step() {
  nuts_update_b();
  gibbs_update_z();
  update_latent();
}

double ChainEngine::log_posterior() const {
  return log_prior_b(CholFactor(b_), transform_.pattern(), model_->prior.nu) +
         bpost_.loglik_of_q(q_);
}

SampleRecord ChainEngine::make_record(int iteration) const {
  SampleRecord rec;
  rec.iteration = iteration;
  rec.lambda = lambda().matrix();
  rec.z = transform_.pattern();
  rec.edge_count = rec.z.edge_count();
  rec.log_posterior = log_posterior();
  rec.imputed = Vector(missing_cells_.size());
  for (std::size_t c = 0; c < missing_cells_.size(); ++c)
    rec.imputed(c) = latent_.y_complete(missing_cells_[c].first,
                                        missing_cells_[c].second);
  return rec;
}

ChainDiagnostics ChainEngine::diagnostics() const {
  ChainDiagnostics d;
  d.transitions_b = nuts_b_.transitions();
  d.divergences_b = nuts_b_.divergences();
  d.post_adapt_transitions_b = nuts_b_.post_adapt_transitions();
  d.post_adapt_divergences_b = nuts_b_.post_adapt_divergences();
  d.step_size_b = nuts_b_.step_size();
  d.mean_accept_b = nuts_b_.mean_accept_stat();
  d.divergences_w = nuts_w_.divergences();
  d.mu_accept_rate =
      mu_proposals_ > 0 ? static_cast<double>(mu_accepts_) / mu_proposals_ : 0.0;
  return d;
}

ChainDiagnostics run_chain(const ModelSpec& model, const ChainOptions& opts,
                           const std::function<void(const SampleRecord&)>& sink) {
  ChainEngine engine(model, opts);
  for (int it = 1; it <= opts.iterations; ++it) {
    engine.step();
    if (it > opts.burn_in && (it - opts.burn_in) % opts.thinning == 0)
      sink(engine.make_record(it));
  }
  const ChainDiagnostics diag = engine.diagnostics();
  if (diag.post_adapt_transitions_b > 0 &&
      diag.post_adapt_divergences_b >
          0.9 * static_cast<double>(diag.post_adapt_transitions_b))
    throw AllDivergentError(
        "chain: more than 90% of post-adaptation transitions diverged "
        "(data may be mis-scaled)");
  return diag;
}

ChainResult run_chain(const ModelSpec& model, const ChainOptions& opts) {
  ChainResult result;
  result.diagnostics = run_chain(
      model, opts, [&](const SampleRecord& rec) { result.samples.push_back(rec); });
  return result;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - lo) * (values[lo + 1] - values[lo]);
}

void SummaryAccumulator::add(const SampleRecord& rec) {
  if (edges_.empty()) {
    lambda_sum_ = Matrix::Zero(rec.lambda.rows(), rec.lambda.cols());
    z_sum_ = Matrix::Zero(rec.lambda.rows(), rec.lambda.cols());
  }
  lambda_sum_ += rec.lambda;
  z_sum_ += rec.z.to_matrix();
  edges_.push_back(static_cast<double>(rec.edge_count));
}

PosteriorSummary SummaryAccumulator::finalize(double threshold) const {
  if (edges_.empty()) throw EmptyChainError("summarize: no samples");
  const int p = static_cast<int>(lambda_sum_.rows());
  const double n = static_cast<double>(edges_.size());
  PosteriorSummary out;
  out.n_samples = static_cast<int>(edges_.size());
  out.lambda_hat = lambda_sum_ / n;
  out.zhat = z_sum_ / n;
  out.z_decided = SparsityPattern(p);
  for (int k = 0; k < p; ++k)
    for (int j = k + 1; j < p; ++j)
      if (out.zhat(j, k) >= threshold) out.z_decided.set(j, k, true);
  out.edge_count_mean = 0.0;
  for (double e : edges_) out.edge_count_mean += e;
  out.edge_count_mean /= n;
  out.edge_count_lo = quantile(edges_, 0.025);
  out.edge_count_hi = quantile(edges_, 0.975);
  return out;
}

PosteriorSummary summarize(const std::vector<SampleRecord>& samples,
                           double threshold) {
  SummaryAccumulator acc;
  for (const SampleRecord& rec : samples) acc.add(rec);
  return acc.finalize(threshold);
}

}  // namespace sbart
