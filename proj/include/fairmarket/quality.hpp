#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fairmarket/relation.hpp"

namespace fairmarket {

inline constexpr double kDefaultKmax = 6.0;

enum class Aspect : std::size_t { kAccuracy = 0, kCompleteness = 1, kTimeliness = 2, kConsistency = 3 };

inline constexpr std::array<Aspect, 4> kAspects{Aspect::kAccuracy, Aspect::kCompleteness,
                                                Aspect::kTimeliness, Aspect::kConsistency};

const char* to_string(Aspect aspect) noexcept;

/// Valid values of an attribute: a closed numeric interval (either bound may
/// be open-ended) or an enumerated set of texts.
struct Domain {
  std::optional<double> min;
  std::optional<double> max;
  std::vector<std::string> values;
};

/// X -> A, optionally conditioned (CFD pattern row). `condition` binds LHS
/// attributes to constants; only tuples matching every constant are in
/// scope. `rhsConstant` turns the row into a constant CFD, where each
/// in-scope tuple must carry that value on A.
struct Dependency {
  std::vector<std::string> lhs;
  std::string rhs;
  std::map<std::string, std::string> condition;
  std::optional<std::string> rhsConstant;
};

struct QualityRuleSet {
  std::map<std::string, std::string> patterns;
  std::map<std::string, Domain> domains;
  std::map<std::string, AttrType> requiredTypes;
  std::size_t nMin = 1;
  std::set<std::string> necessaryAttrs;
  std::array<double, 3> completenessWeights{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::map<std::string, std::chrono::seconds> expiry;
  std::vector<Dependency> dependencies;

  /// Throws kInvalidConfig on broken invariants (weights, nMin, regexes).
  void validate() const;
};

/// -log10 of the ratio clamped into [10^-kmax, 1].
double violation_score(double ratio, double kmax = kDefaultKmax);

struct AccuracyResult {
  std::size_t nAc = 0;
  double rate = 0.0;
  double k = 0.0;
};

struct CompletenessResult {
  std::size_t nMis = 0;
  std::size_t necessaryCount = 0;  // p
  std::size_t coveredNecessary = 0;  // p'
  double inner = 0.0;  // unclamped weighted sum
  double k = 0.0;
};

struct TimelinessResult {
  std::size_t nExp = 0;
  std::size_t timestampAttrCount = 0;  // m_t
  double rate = 0.0;
  double k = 0.0;
};

struct ConsistencyResult {
  std::size_t nVio = 0;
  double rate = 0.0;
  double k = 0.0;
};

struct QualityProfile {
  std::array<double, 4> k{};
  std::array<double, 4> violationRates{};  // clamped ratios, r_i = 10^-k_i
  std::size_t nAc = 0;
  std::size_t nMis = 0;
  std::size_t nExp = 0;
  std::size_t nVio = 0;
  std::size_t rows = 0;
  std::size_t cellTotal = 0;
  std::size_t timestampAttrCount = 0;
  std::size_t coveredNecessary = 0;
  std::size_t necessaryCount = 0;

  double score(Aspect a) const { return k[static_cast<std::size_t>(a)]; }
  /// Violation count feeding the cleaning-cost estimate of an aspect.
  std::size_t violations(Aspect a) const;
};

AccuracyResult assess_accuracy(const Relation& rel, const QualityRuleSet& rules, double kmax = kDefaultKmax);
CompletenessResult assess_completeness(const Relation& rel, const QualityRuleSet& rules,
                                       double kmax = kDefaultKmax);
TimelinessResult assess_timeliness(const Relation& rel, const QualityRuleSet& rules, Instant now,
                                   double kmax = kDefaultKmax);
ConsistencyResult assess_consistency(const Relation& rel, const QualityRuleSet& rules, double kmax = kDefaultKmax);
QualityProfile assess_all(const Relation& rel, const QualityRuleSet& rules, Instant now,
                          double kmax = kDefaultKmax);

/// Per-cell checks shared by the assessor and by tooling that needs to
/// reason about single cells (e.g. mistake injection). Regexes are compiled
/// once per checker.
class CellChecker {
 public:
  CellChecker(const Relation& rel, const QualityRuleSet& rules);
  ~CellChecker();
  CellChecker(CellChecker&&) noexcept;
  CellChecker& operator=(CellChecker&&) noexcept;

  /// True when a present cell breaks its pattern, domain or required type.
  bool inaccurate(std::size_t col, const Cell& cell) const;
  /// True when a present timestamp cell is older than its expiry allows.
  bool expired(std::size_t col, const Cell& cell, Instant now) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Row indices violating at least one dependency (sorted ascending).
std::vector<std::size_t> violating_rows(const Relation& rel, const QualityRuleSet& rules);

}  // namespace fairmarket
