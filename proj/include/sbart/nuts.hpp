#pragma once

#include "sbart/rng.hpp"
#include "sbart/types.hpp"

namespace sbart {

/// No-U-Turn sampler settings. delta is the dual-averaging target acceptance
/// statistic; m_adapt the number of adapting transitions; initial_step <= 0
/// requests the coarse search heuristic.
struct NutsConfig {
  int m_adapt = 10;
  double delta = 0.5;
  int max_tree_depth = 10;
  double initial_step = 0.0;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0))
      throw ValidationError("nuts: delta must be in (0,1)");
    if (max_tree_depth < 1 || max_tree_depth > 12)
      throw ValidationError("nuts: max_tree_depth must be in [1,12]");
    if (m_adapt < 0) throw ValidationError("nuts: m_adapt must be >= 0");
  }
};

/// Target interface: unnormalized log density and its gradient.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual double value_and_grad(const Vector& x, Vector& grad) const = 0;
};

struct NutsStats {
  double accept_stat = 0.0;
  int depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double step_size = 0.0;
};

/// One-chain NUTS with dual-averaging step-size adaptation (unit metric,
/// slice termination, doubling trees). The step size adapts for the first
/// m_adapt transitions and is frozen at the averaged value afterwards.
/// Divergent trajectories (energy error beyond 1000) reject the whole
/// transition and are counted.
class NutsSampler {
 public:
  explicit NutsSampler(NutsConfig cfg);

  NutsStats step(const LogDensity& target, Vector& x, Rng& rng);

  double step_size() const { return step_size_; }
  long long divergences() const { return divergences_; }
  long long transitions() const { return m_; }
  long long post_adapt_transitions() const { return post_adapt_transitions_; }
  long long post_adapt_divergences() const { return post_adapt_divergences_; }
  double mean_accept_stat() const {
    return accept_count_ > 0 ? accept_sum_ / accept_count_ : 0.0;
  }

 private:
  void initialize(const LogDensity& target, const Vector& x, Rng& rng);

  NutsConfig cfg_;
  bool initialized_ = false;
  double step_size_ = 1.0;
  double mu_ = 0.0;
  double log_eps_bar_ = 0.0;
  double h_bar_ = 0.0;
  long long m_ = 0;
  long long divergences_ = 0;
  long long post_adapt_transitions_ = 0;
  long long post_adapt_divergences_ = 0;
  double accept_sum_ = 0.0;
  long long accept_count_ = 0;
};

}  // namespace sbart
