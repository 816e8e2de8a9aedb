#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace fairmarket {

/// Seeded randomness source. The mappings from raw engine output to ranges
/// are written out here instead of using <random> distributions, whose
/// algorithms differ between standard libraries; seeded runs must be
/// reproducible everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform integer in [lo, hi], inclusive.
  std::int64_t between(std::int64_t lo, std::int64_t hi);

  /// Uniform double in [0, 1).
  double unit();

  /// Uniform point on the 3-simplex (four non-negative weights summing to 1),
  /// via normalized exponential draws.
  std::array<double, 4> simplex4();

  /// Independent child stream, so that sub-experiments do not perturb each
  /// other's draws.
  Rng fork() { return Rng(next() ^ 0x9e3779b97f4a7c15ULL); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fairmarket
