#pragma once

#include <cstdint>
#include <random>

namespace hmmsel {

// A seeded random stream with explicit sampler implementations.
//
// The engine (mt19937_64) has standard-mandated output, and all variate
// transforms below are implemented here rather than taken from
// <random>'s distribution classes, whose output is implementation
// defined. Together this makes every simulation reproducible bit for bit
// from its seed. Streams are cheap; give each worker its own and never
// share one across threads.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() { return 1.0 - uniform01(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal (Marsaglia polar, one spare cached).
  double normal();

  double exponential() { return -std::log(uniform_pos()); }

  // Gamma with given shape and scale (Marsaglia-Tsang squeeze).
  double gamma(double shape, double scale);

  // Poisson count with the given mean (inversion by exponential waits).
  long poisson(double mean);

  // Von Mises on (-pi, pi] via the Best-Fisher rejection sampler; exact.
  double von_mises(double location, double concentration);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;

  double gamma_ge1(double shape);
};

}  // namespace hmmsel
