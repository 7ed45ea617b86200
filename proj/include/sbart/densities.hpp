#pragma once

#include <cmath>

namespace sbart {

inline constexpr double log2pi = 1.8378770664093454836;

/// log Gamma(x | shape, rate) density, mean shape/rate.
inline double gamma_logpdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(x) - rate * x;
}

inline double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * log2pi;
}

}  // namespace sbart
