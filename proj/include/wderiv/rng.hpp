#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace wderiv {

// All randomness flows through mt19937_64 plus the fixed bit manipulations
// below. std::uniform_real_distribution and std::normal_distribution are
// implementation-defined, so they are avoided: the generated streams must be
// identical for a given seed on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on the open interval (0, 1); never returns an endpoint, so
  // log(u) and log(-log(u)) are always finite.
  double uniform() {
    const std::uint64_t bits = engine_() >> 11;  // top 53 bits
    return (static_cast<double>(bits) + 0.5) * 0x1p-53;
  }

  // Standard normal via Box-Muller. Consumes two uniforms per call; the
  // second variate is discarded so the stream position never depends on
  // call history.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Unit-rate exponential.
  double exponential() { return -std::log(uniform()); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Counter-based child seed: splitmix64 finalizer applied to
// master + golden-ratio * (index + 1). O(1) in the index, so workers may
// consume events or replicates in any order and still agree on streams.
inline std::uint64_t child_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace wderiv
