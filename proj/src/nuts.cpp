#include "sbart/nuts.hpp"

#include <cmath>
#include <limits>

namespace sbart {

namespace {

constexpr double kDeltaMax = 1000.0;  // divergence threshold in energy units
constexpr double kGamma = 0.05;       // dual-averaging shrinkage
constexpr double kT0 = 10.0;
constexpr double kKappa = 0.75;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct PhasePoint {
  Vector x;
  Vector r;
  Vector g;
  double logp = 0.0;

  double joint() const { return logp - 0.5 * r.squaredNorm(); }
};

double safe_logp(const LogDensity& target, const Vector& x, Vector& grad) {
  const double v = target.value_and_grad(x, grad);
  return std::isnan(v) ? kNegInf : v;
}

PhasePoint leapfrog(const LogDensity& target, const PhasePoint& z, double eps) {
  PhasePoint out = z;
  out.r += 0.5 * eps * out.g;
  out.x += eps * out.r;
  out.logp = safe_logp(target, out.x, out.g);
  if (!std::isfinite(out.logp)) {
    out.logp = kNegInf;
    return out;
  }
  out.r += 0.5 * eps * out.g;
  return out;
}

bool no_uturn(const PhasePoint& minus, const PhasePoint& plus) {
  const Vector d = plus.x - minus.x;
  return d.dot(minus.r) >= 0.0 && d.dot(plus.r) >= 0.0;
}

struct TreeResult {
  PhasePoint z_minus, z_plus;
  Vector x_prop;
  long long n = 0;
  bool keep_going = false;
  bool divergent = false;
  double alpha_sum = 0.0;
  long long n_alpha = 0;
  int n_leapfrog = 0;
};

TreeResult build_tree(const LogDensity& target, const PhasePoint& z,
                      double log_u, int dir, int depth, double eps,
                      double joint0, Rng& rng) {
  if (depth == 0) {
    TreeResult res;
    PhasePoint z1 = leapfrog(target, z, dir * eps);
    res.n_leapfrog = 1;
    const double joint = std::isfinite(z1.logp) ? z1.joint() : kNegInf;
    res.n = (log_u <= joint) ? 1 : 0;
    res.keep_going = (log_u < joint + kDeltaMax);
    res.divergent = !res.keep_going;
    res.alpha_sum = std::isfinite(joint) ? std::min(1.0, std::exp(joint - joint0)) : 0.0;
    res.n_alpha = 1;
    res.x_prop = z1.x;
    res.z_minus = z1;
    res.z_plus = std::move(z1);
    return res;
  }

  TreeResult left = build_tree(target, z, log_u, dir, depth - 1, eps, joint0, rng);
  if (!left.keep_going) return left;

  const PhasePoint& edge = (dir == -1) ? left.z_minus : left.z_plus;
  TreeResult right = build_tree(target, edge, log_u, dir, depth - 1, eps, joint0, rng);

  TreeResult res;
  res.z_minus = (dir == -1) ? right.z_minus : left.z_minus;
  res.z_plus = (dir == -1) ? left.z_plus : right.z_plus;
  res.n = left.n + right.n;
  res.x_prop = left.x_prop;
  if (res.n > 0 && rng.uniform() * static_cast<double>(res.n) <
                       static_cast<double>(right.n))
    res.x_prop = right.x_prop;
  res.keep_going = right.keep_going && no_uturn(res.z_minus, res.z_plus);
  res.divergent = left.divergent || right.divergent;
  res.alpha_sum = left.alpha_sum + right.alpha_sum;
  res.n_alpha = left.n_alpha + right.n_alpha;
  res.n_leapfrog = left.n_leapfrog + right.n_leapfrog;
  return res;
}

/// Coarse initial step size: double or halve until one leapfrog step crosses
/// acceptance 1/2.
double find_reasonable_step(const LogDensity& target, const Vector& x, Rng& rng) {
  PhasePoint z;
  z.x = x;
  z.r = Vector(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) z.r(i) = rng.normal();
  z.logp = safe_logp(target, z.x, z.g);
  if (!std::isfinite(z.logp)) return 1.0;
  const double joint0 = z.joint();

  double eps = 1.0;
  PhasePoint z1 = leapfrog(target, z, eps);
  double joint1 = std::isfinite(z1.logp) ? z1.joint() : kNegInf;
  const double a = (joint1 - joint0 > std::log(0.5)) ? 1.0 : -1.0;
  for (int iter = 0; iter < 64; ++iter) {
    if (!(a * (joint1 - joint0) > -a * std::log(2.0))) break;
    eps *= std::pow(2.0, a);
    if (eps < 1e-10 || eps > 1e10) break;
    z1 = leapfrog(target, z, eps);
    joint1 = std::isfinite(z1.logp) ? z1.joint() : kNegInf;
  }
  return eps;
}

}  // namespace

NutsSampler::NutsSampler(NutsConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void NutsSampler::initialize(const LogDensity& target, const Vector& x, Rng& rng) {
  step_size_ = cfg_.initial_step > 0.0 ? cfg_.initial_step
                                       : find_reasonable_step(target, x, rng);
  mu_ = std::log(10.0 * step_size_);
  log_eps_bar_ = std::log(step_size_);
  h_bar_ = 0.0;
  initialized_ = true;
}

NutsStats NutsSampler::step(const LogDensity& target, Vector& x, Rng& rng) {
  if (!initialized_) initialize(target, x, rng);
  ++m_;
  const double eps = step_size_;

  PhasePoint z0;
  z0.x = x;
  z0.r = Vector(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) z0.r(i) = rng.normal();
  z0.logp = safe_logp(target, z0.x, z0.g);
  const double joint0 = std::isfinite(z0.logp) ? z0.joint() : kNegInf;

  const double u = std::max(rng.uniform(), 1e-300);
  const double log_u = joint0 + std::log(u);

  PhasePoint z_minus = z0, z_plus = z0;
  Vector x_new = x;
  long long n = 1;
  bool keep_going = std::isfinite(joint0);
  bool divergent = !std::isfinite(joint0);
  double alpha_sum = 0.0;
  long long n_alpha = 0;
  int depth = 0;
  int n_leapfrog = 0;

  while (keep_going && depth < cfg_.max_tree_depth) {
    const int dir = (rng.uniform() < 0.5) ? -1 : 1;
    const PhasePoint& edge = (dir == -1) ? z_minus : z_plus;
    TreeResult sub = build_tree(target, edge, log_u, dir, depth, eps, joint0, rng);
    if (dir == -1)
      z_minus = sub.z_minus;
    else
      z_plus = sub.z_plus;
    if (sub.divergent) divergent = true;
    if (sub.keep_going && sub.n > 0 &&
        rng.uniform() < std::min(1.0, static_cast<double>(sub.n) /
                                          static_cast<double>(n)))
      x_new = sub.x_prop;
    n += sub.n;
    keep_going = sub.keep_going && no_uturn(z_minus, z_plus);
    alpha_sum += sub.alpha_sum;
    n_alpha += sub.n_alpha;
    n_leapfrog += sub.n_leapfrog;
    ++depth;
  }

  const double accept_stat =
      n_alpha > 0 ? alpha_sum / static_cast<double>(n_alpha) : 0.0;
  accept_sum_ += accept_stat;
  ++accept_count_;

  if (divergent) {
    ++divergences_;  // transition rejected, x unchanged
  } else {
    x = x_new;
  }
  if (m_ > cfg_.m_adapt) {
    ++post_adapt_transitions_;
    if (divergent) ++post_adapt_divergences_;
  }

  // Dual averaging while adapting; freeze at the averaged value afterwards.
  if (m_ <= cfg_.m_adapt) {
    const double md = static_cast<double>(m_);
    const double prop = 1.0 / (md + kT0);
    h_bar_ = (1.0 - prop) * h_bar_ + prop * (cfg_.delta - accept_stat);
    const double log_eps = mu_ - std::sqrt(md) / kGamma * h_bar_;
    const double w = std::pow(md, -kKappa);
    log_eps_bar_ = w * log_eps + (1.0 - w) * log_eps_bar_;
    step_size_ = (m_ == cfg_.m_adapt) ? std::exp(log_eps_bar_) : std::exp(log_eps);
  }

  NutsStats stats;
  stats.accept_stat = accept_stat;
  stats.depth = depth;
  stats.n_leapfrog = n_leapfrog;
  stats.divergent = divergent;
  stats.step_size = eps;
  return stats;
}

}  // namespace sbart
