#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairmarket/quality.hpp"

namespace fairmarket {

/// Buyer weights over the four quality aspects. Construction enforces
/// non-negativity and a unit sum (within 1e-9).
class WeightVector {
 public:
  explicit WeightVector(std::array<double, 4> w);

  static WeightVector uniform() { return WeightVector({0.25, 0.25, 0.25, 0.25}); }
  /// Parses "w1,w2,w3,w4".
  static WeightVector parse(const std::string& csv);

  double operator[](std::size_t i) const { return w_[i]; }
  double operator[](Aspect a) const { return w_[static_cast<std::size_t>(a)]; }
  const std::array<double, 4>& values() const noexcept { return w_; }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;

 private:
  std::array<double, 4> w_;
};

/// One tier of cleaning effort: buyers whose weight falls in [lo, hi) are
/// assumed to clean with `method`, costing `cost` time units per violation.
/// The last level of an aspect also contains hi when hi == 1.
struct CleaningLevel {
  double lo = 0.0;
  double hi = 1.0;
  double cost = 0.0;
  std::string method;
};

class CleaningCostModel {
 public:
  CleaningCostModel() = default;
  explicit CleaningCostModel(std::array<std::vector<CleaningLevel>, 4> levels);

  /// Levels modelled on common cleaning practice for each aspect, with the
  /// completeness tiers at [0,.1) [.1,.2) [.2,.3) [.3,1].
  static CleaningCostModel standard();

  const std::vector<CleaningLevel>& levels(Aspect a) const { return levels_[static_cast<std::size_t>(a)]; }
  /// 1-based level number.
  const CleaningLevel& level(Aspect a, std::size_t number) const { return levels(a).at(number - 1); }

  /// Throws kInvalidConfig unless each aspect's ranges are ascending,
  /// disjoint, cover [0,1], and costs are non-decreasing.
  void validate() const;

 private:
  std::array<std::vector<CleaningLevel>, 4> levels_;
};

enum class BaselineMode { kSubstituteK, kSubstituteW };

const char* to_string(BaselineMode mode) noexcept;
BaselineMode parse_baseline_mode(const std::string& name);

struct MarketParams {
  std::array<double, 4> standard{2.5, 2.0, 1.5, 2.0};  // S
  double combinedCoefficient = 0.05;  // C
  double additiveCoefficient = 1.0;   // E
  double costNormalizer = 0.0;        // gamma
  double kmax = kDefaultKmax;
  BaselineMode baselineMode = BaselineMode::kSubstituteK;

  void validate() const;
};

/// 1-based level whose weight range holds w. Throws kUncoveredWeight.
std::size_t select_level(const CleaningCostModel& model, Aspect aspect, double w);

/// Estimated cleaning time for `violations` defects at the given level.
double cleaning_cost(const CleaningLevel& level, double k, std::size_t cellTotal, double violations);

/// Quality of one aspect net of the buyer's expected cleaning burden:
/// k - gamma * cost / cellTotal.
double aspect_score(Aspect aspect, double k, double violations, std::size_t cellTotal, double w,
                    const CleaningCostModel& model, double gamma);

/// Buyer-weighted integrated quality of an assessed instance.
double fq(const QualityProfile& profile, const WeightVector& w, const CleaningCostModel& model, double gamma);

/// Integrated quality of the market standard S under the buyer's weights.
double fq_standard(const MarketParams& params, const WeightVector& w, const CleaningCostModel& model);

/// Baseline quality per the configured BaselineMode. kSubstituteW uses S,
/// normalized to unit sum, as the weights applied to the instance.
double baseline_quality(const MarketParams& params, const WeightVector& w, const CleaningCostModel& model,
                        const QualityProfile& profile);

/// Component-wise mean K over the market. Throws kEmptyMarket.
std::array<double, 4> compute_market_baseline(std::span<const QualityProfile> profiles);

struct FloatedPrice {
  double price = 0.0;
  bool clamped = false;  // the formula went negative and was raised to 0
};

FloatedPrice float_additive(double p, double fq, double fqStandard, double e);
FloatedPrice float_multiplicative(double p, double fq, double fqStandard);
FloatedPrice float_combined(double p, double fq, double fqStandard, double c);

/// Rounds a non-negative major-unit amount half-up to integer minor units.
std::int64_t to_minor_units(double major, std::int64_t scale);

struct PriceBreakdown {
  double basePrice = 0.0;
  double fq = 0.0;
  double fqStandard = 0.0;
  FloatedPrice floated;
  std::int64_t minor = 0;  // charged amount
};

/// Combined floating of a base price by the buyer-weighted quality of the
/// instance against the market baseline, rounded to minor units.
PriceBreakdown quality_price(double basePrice, const QualityProfile& profile, const WeightVector& w,
                             const MarketParams& params, const CleaningCostModel& model, std::int64_t scale);

}  // namespace fairmarket
