#include "fairmarket/rng.hpp"

#include <cmath>
#include <limits>

namespace fairmarket {

std::uint64_t Rng::below(std::uint64_t bound) {
  // Rejection sampling over the largest multiple of bound.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

std::int64_t Rng::between(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());  // full 64-bit range
  return lo + static_cast<std::int64_t>(below(span));
}

double Rng::unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::array<double, 4> Rng::simplex4() {
  std::array<double, 4> w{};
  double sum = 0.0;
  for (auto& x : w) {
    x = -std::log1p(-unit());
    sum += x;
  }
  for (auto& x : w) x /= sum;
  return w;
}

}  // namespace fairmarket
