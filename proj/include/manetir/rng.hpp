#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace manetir {

/// Seeded generator used everywhere randomness is needed.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The distributions are implemented here rather than taken from
/// <random>, because the standard library distributions are allowed to differ
/// between implementations and runs must be reproducible byte-for-byte.
class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (seed, stream, substream), e.g. one per node.
  static Rng derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  void fill(std::span<std::uint8_t> out);

  /// Engine state in its textual standard form; used for state comparisons.
  std::string state() const;

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace manetir
