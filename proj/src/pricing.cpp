#include "fairmarket/pricing.hpp"

#include <cmath>
#include <sstream>

#include "fairmarket/error.hpp"

namespace fairmarket {

WeightVector::WeightVector(std::array<double, 4> w) : w_(w) {
  double sum = 0.0;
  for (double x : w_) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(ErrorCode::kInvalidWeights, "weights must be finite and non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidWeights, "weights must sum to 1, got " + std::to_string(sum));
}

WeightVector WeightVector::parse(const std::string& csv) {
  std::array<double, 4> w{};
  std::istringstream in(csv);
  std::string item;
  std::size_t i = 0;
  while (std::getline(in, item, ',')) {
    if (i == 4) throw Error(ErrorCode::kInvalidWeights, "expected four weights in '" + csv + "'");
    try {
      std::size_t used = 0;
      w[i] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidWeights, "not a number: '" + item + "'");
    }
    ++i;
  }
  if (i != 4) throw Error(ErrorCode::kInvalidWeights, "expected four weights in '" + csv + "'");
  return WeightVector(w);
}

CleaningCostModel::CleaningCostModel(std::array<std::vector<CleaningLevel>, 4> levels) : levels_(std::move(levels)) {
  validate();
}

CleaningCostModel CleaningCostModel::standard() {
  return CleaningCostModel({{
      {
          {0.0, 0.1, 0.0, "drop tuples holding invalid values"},
          {0.1, 0.25, 0.5, "rewrite values to the expected pattern and type"},
          {0.25, 0.4, 1.0, "look up out-of-domain values in a reference source"},
          {0.4, 1.0, 2.0, "manually verify and correct inaccurate values"},
      },
      {
          {0.0, 0.1, 0.0, "ignore all the records with missing values"},
          {0.1, 0.2, 0.5, "fill missing ones with special value"},
          {0.2, 0.3, 1.0, "capture missing values through statistic methods"},
          {0.3, 1.0, 2.0, "capture missing values through machine learning methods"},
      },
      {
          {0.0, 0.15, 0.0, "discard expired values"},
          {0.15, 0.35, 1.0, "re-fetch expired values from the provider"},
          {0.35, 1.0, 2.0, "re-collect expired values from primary sources"},
      },
      {
          {0.0, 0.1, 0.0, "drop tuples violating dependencies"},
          {0.1, 0.3, 1.0, "repair violations with a minimal-change heuristic"},
          {0.3, 1.0, 2.0, "resolve violations with master data and review"},
      },
  }});
}

void CleaningCostModel::validate() const {
  for (auto a : kAspects) {
    const auto& lv = levels(a);
    const std::string name = to_string(a);
    if (lv.empty()) throw Error(ErrorCode::kInvalidConfig, name + ": no cleaning levels");
    if (lv.front().lo != 0.0) throw Error(ErrorCode::kInvalidConfig, name + ": levels must start at 0");
    if (lv.back().hi != 1.0) throw Error(ErrorCode::kInvalidConfig, name + ": levels must end at 1");
    for (std::size_t i = 0; i < lv.size(); ++i) {
      if (!(lv[i].lo < lv[i].hi)) throw Error(ErrorCode::kInvalidConfig, name + ": empty weight range");
      if (!(lv[i].cost >= 0.0)) throw Error(ErrorCode::kInvalidConfig, name + ": negative cost");
      if (i > 0 && lv[i].lo != lv[i - 1].hi)
        throw Error(ErrorCode::kInvalidConfig, name + ": weight ranges must be contiguous");
      if (i > 0 && lv[i].cost < lv[i - 1].cost)
        throw Error(ErrorCode::kInvalidConfig, name + ": costs must be non-decreasing");
    }
  }
}

const char* to_string(BaselineMode mode) noexcept {
  return mode == BaselineMode::kSubstituteW ? "substituteW" : "substituteK";
}

BaselineMode parse_baseline_mode(const std::string& name) {
  if (name == "substituteK") return BaselineMode::kSubstituteK;
  if (name == "substituteW") return BaselineMode::kSubstituteW;
  throw Error(ErrorCode::kInvalidConfig, "unknown baselineMode '" + name + "'");
}

void MarketParams::validate() const {
  for (double s : standard)
    if (!(s >= 0.0 && s <= kmax)) throw Error(ErrorCode::kInvalidConfig, "standard quality values must lie in [0, Kmax]");
  if (!(combinedCoefficient >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "C must be non-negative");
  if (!(additiveCoefficient >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "E must be non-negative");
  if (!(costNormalizer >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "gamma must be non-negative");
}

std::size_t select_level(const CleaningCostModel& model, Aspect aspect, double w) {
  const auto& lv = model.levels(aspect);
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const bool last = i + 1 == lv.size();
    if (w >= lv[i].lo && (w < lv[i].hi || (last && lv[i].hi == 1.0 && w == 1.0))) return i + 1;
  }
  throw Error(ErrorCode::kUncoveredWeight, std::string(to_string(aspect)) + " weight " + std::to_string(w) +
                                               " falls in no cleaning level");
}

double cleaning_cost(const CleaningLevel& level, double /*k*/, std::size_t /*cellTotal*/, double violations) {
  return level.cost * violations;
}

double aspect_score(Aspect aspect, double k, double violations, std::size_t cellTotal, double w,
                    const CleaningCostModel& model, double gamma) {
  if (gamma == 0.0) return k;
  if (cellTotal == 0) throw Error(ErrorCode::kZeroCellTotal, "cleaning cost needs a non-empty instance");
  const auto& level = model.level(aspect, select_level(model, aspect, w));
  return k - gamma * cleaning_cost(level, k, cellTotal, violations) / static_cast<double>(cellTotal);
}

double fq(const QualityProfile& profile, const WeightVector& w, const CleaningCostModel& model, double gamma) {
  double sum = 0.0;
  for (auto a : kAspects) {
    sum += aspect_score(a, profile.score(a), static_cast<double>(profile.violations(a)), profile.cellTotal, w[a],
                        model, gamma) *
           w[a];
  }
  return sum;
}

double fq_standard(const MarketParams& params, const WeightVector& w, const CleaningCostModel& model) {
  double sum = 0.0;
  for (auto a : kAspects) {
    const double s = params.standard[static_cast<std::size_t>(a)];
    // Violations implied by the standard score over a unit instance.
    const double implied = std::pow(10.0, -s);
    sum += aspect_score(a, s, implied, 1, w[a], model, params.costNormalizer) * w[a];
  }
  return sum;
}

double baseline_quality(const MarketParams& params, const WeightVector& w, const CleaningCostModel& model,
                        const QualityProfile& profile) {
  if (params.baselineMode == BaselineMode::kSubstituteK) return fq_standard(params, w, model);
  double total = 0.0;
  for (double s : params.standard) total += s;
  if (total <= 0.0) throw Error(ErrorCode::kZeroBaseline, "standard values sum to zero");
  std::array<double, 4> normalized{};
  for (std::size_t i = 0; i < 4; ++i) normalized[i] = params.standard[i] / total;
  return fq(profile, WeightVector(normalized), model, params.costNormalizer);
}

std::array<double, 4> compute_market_baseline(std::span<const QualityProfile> profiles) {
  if (profiles.empty()) throw Error(ErrorCode::kEmptyMarket, "cannot average quality over an empty market");
  std::array<double, 4> s{};
  for (const auto& p : profiles)
    for (std::size_t i = 0; i < 4; ++i) s[i] += p.k[i];
  for (auto& x : s) x /= static_cast<double>(profiles.size());
  return s;
}

namespace {

FloatedPrice clamp_price(double p) {
  if (p < 0.0) return {0.0, true};
  return {p, false};
}

void require_baseline(double fqStandard) {
  if (fqStandard == 0.0) throw Error(ErrorCode::kZeroBaseline, "baseline quality FQ_S is zero");
}

}  // namespace

FloatedPrice float_additive(double p, double fq, double fqStandard, double e) {
  return clamp_price(p + (fq - fqStandard) * e);
}

FloatedPrice float_multiplicative(double p, double fq, double fqStandard) {
  require_baseline(fqStandard);
  return clamp_price(fq / fqStandard * p);
}

FloatedPrice float_combined(double p, double fq, double fqStandard, double c) {
  require_baseline(fqStandard);
  return clamp_price(p + (fq - fqStandard) / fqStandard * p * c);
}

std::int64_t to_minor_units(double major, std::int64_t scale) {
  if (major < 0.0) throw Error(ErrorCode::kNegativeAmount, "negative amount");
  return static_cast<std::int64_t>(std::floor(major * static_cast<double>(scale) + 0.5 + 1e-9));
}

PriceBreakdown quality_price(double basePrice, const QualityProfile& profile, const WeightVector& w,
                             const MarketParams& params, const CleaningCostModel& model, std::int64_t scale) {
  PriceBreakdown out;
  out.basePrice = basePrice;
  out.fq = fq(profile, w, model, params.costNormalizer);
  out.fqStandard = baseline_quality(params, w, model, profile);
  out.floated = float_combined(basePrice, out.fq, out.fqStandard, params.combinedCoefficient);
  out.minor = to_minor_units(out.floated.price, scale);
  return out;
}

}  // namespace fairmarket
