// Seeded randomness for oracle suites and property tests.
//
// The generator is SplitMix64 (Steele/Lea/Flood), chosen because it is a
// tiny, well-known, counter-style generator: the n-th output is a pure
// function of (seed, n), so seeds reproduce across platforms and languages.
// The exact algorithm is documented in the README; CSV determinism depends
// on it, so it must not be swapped silently.
#pragma once

#include <cstdint>

namespace bsdelab {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

// Derives an independent stream key so that instance #i of a seeded suite
// does not share draws with instance #j.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 g(seed ^ (0xA02BDBF7BB3C0A7ULL * (stream + 1)));
  return g.next();
}

}  // namespace bsdelab
