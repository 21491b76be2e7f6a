#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hmmsel {

// SplitMix64 finalizer. Used as the one seed-derivation primitive of the
// project: every worker/replicate/start stream seed is derived from the
// master seed with derive_seed, independent of scheduling order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

// FNV-1a 64-bit hash, used for config fingerprints in run manifests.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Runs fn(i) for i in [0, n) on up to n_workers threads. Tasks are statically
// partitioned by index so results are placement-deterministic; fn must write
// only to its own slot. Exceptions are captured and rethrown on the caller.
void parallel_for(std::size_t n, int n_workers, const std::function<void(std::size_t)>& fn);

// Shortest round-trip decimal representation of a double ("%.17g" trimmed).
std::string format_double(double v);

std::string to_hex(std::uint64_t v);

}  // namespace hmmsel
