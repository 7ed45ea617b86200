#pragma once

#include <cstdint>
#include <random>

namespace sbart {

/// Seeded random stream. One instance per chain/replica; instances are never
/// shared across threads. Distribution objects are constructed per call so a
/// stream's output depends only on the seed and the call sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double normal() { return std::normal_distribution<double>{}(gen_); }

  /// Gamma with shape alpha and *rate* beta (mean alpha / beta).
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>{shape, 1.0 / rate}(gen_);
  }

  long long poisson(double mean) {
    return std::poisson_distribution<long long>{mean}(gen_);
  }

  /// Uniform integer in {0, ..., n-1}.
  int uniform_int(int n) {
    return std::uniform_int_distribution<int>{0, n - 1}(gen_);
  }

  std::uint64_t next_u64() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace sbart
