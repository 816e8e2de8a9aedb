#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairmarket/protocol.hpp"

namespace fairmarket {

// ---------------------------------------------------------------- config

/// Parses "6y", "30d", "12h", "15m", "45s" or a bare number of seconds.
/// A year is 365.2425 days.
std::chrono::seconds parse_duration(const std::string& text);
std::string format_duration(std::chrono::seconds d);

QualityRuleSet parse_rules(const json& j);
json rules_to_json(const QualityRuleSet& rules);
CleaningCostModel parse_cost_model(const json& j);
json cost_model_to_json(const CleaningCostModel& model);

struct DatasetConfig {
  std::string name;
  std::filesystem::path csv;  // relative paths resolve against the config file
  std::vector<Attribute> schema;
  QualityRuleSet rules;
  PricePoint price;
  std::vector<std::string> queries;
};

struct MarketConfig {
  std::vector<DatasetConfig> datasets;
  MarketParams params;
  bool deriveStandard = true;  // "S": null
  CleaningCostModel costModel = CleaningCostModel::standard();
  std::string groupProfile = "test";
  std::uint64_t seed = 1;
  ProtocolOptions protocol;
  Instant now{};
};

/// Throws kInvalidConfig on schema errors.
MarketConfig parse_market_config(const json& j);
MarketConfig load_market_config(const std::filesystem::path& path);
json market_config_to_json(const MarketConfig& config);

/// Loads every CSV and parses every query. Throws kIOFailure for missing files.
MarketSetup materialize(const MarketConfig& config, const std::filesystem::path& baseDir);

// ---------------------------------------------------------------- data

/// The university relation used in worked examples, with its rules.
VendorDataset university_dataset();
/// Toy-group market over the university relation, set up to replay the
/// Alice and Bob walkthrough.
MarketSetup demo_setup();

struct DeskSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Five dataset shapes (rows x columns) used for the desk experiments.
/// `scale` multiplies row counts (at least 50 rows each).
std::vector<DeskSpec> desk_specs(double scale = 1.0);

/// Synthetic dataset with a fixed layout: an id, an FD key -> region pair
/// over groups of about four rows, enumerated and ranged attributes, a date
/// and an instant timestamp, and filler columns. Defect rates vary with the
/// seed so datasets differ in quality.
VendorDataset generate_desk_dataset(const DeskSpec& spec, std::uint64_t seed, Instant now);

/// Reference time for generated data.
Instant desk_now();

/// Market over the five desk datasets with S derived from their mean K.
MarketSetup desk_setup(double scale, std::uint64_t seed);

/// Writes each dataset as CSV plus a config.json referencing them.
void write_market(const MarketSetup& setup, const std::filesystem::path& dir, const std::string& groupProfile);

// ---------------------------------------------------------------- mistakes

enum class Corruption { kPatternBreak, kBlank, kAge, kFdConflict };
const char* to_string(Corruption c) noexcept;

/// Applies single-cell corruptions that each add exactly one defect to one
/// quality aspect and leave the other aspects' counts untouched.
class MistakeInjector {
 public:
  MistakeInjector(Relation& rel, const QualityRuleSet& rules, Instant now, Rng& rng);

  /// Returns false when no eligible cell exists for this kind.
  bool inject(Corruption kind);
  /// Cycles kinds round-robin, skipping exhausted ones. Returns the kind
  /// applied, or nullopt if none applies.
  std::optional<Corruption> inject_next();

 private:
  bool pattern_break();
  bool blank();
  bool age();
  bool fd_conflict();
  bool accurate(std::size_t row, std::size_t col) const;
  std::vector<std::pair<std::size_t, std::size_t>> candidates(const std::vector<std::size_t>& cols,
                                                              bool needTimestamp) const;

  Relation& rel_;
  const QualityRuleSet& rules_;
  Instant now_;
  Rng& rng_;
  CellChecker checker_;
  std::vector<bool> dependencyCol_;
  std::vector<bool> timestampCol_;
  std::size_t cursor_ = 0;

  // FD bookkeeping, built on first use. Key columns are never corrupted, so
  // the groups stay valid; violation flags only change through fd_conflict.
  struct FdGroups {
    std::size_t dependency = 0;
    std::size_t rhs = 0;
    bool shared = false;  // rhs also appears in another dependency
    std::vector<std::vector<std::size_t>> groups;  // only groups of two or more
  };
  void prepare_fd();
  bool fdReady_ = false;
  std::vector<FdGroups> fds_;
  std::vector<char> violating_;
};

// ---------------------------------------------------------------- stats

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double skewness = 0.0;  // population moment ratio
};
Summary summarize(const std::vector<double>& xs);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
};
Histogram histogram(const std::vector<double>& xs, std::size_t bins = 20);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};
WelchResult welch_test(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------- reports

struct DatasetTiming {
  std::string name;
  std::size_t rows = 0;
  std::size_t columns = 0;
  double avgPreprocessSeconds = 0.0;
  std::optional<double> avgQuerySeconds;
  std::size_t queries = 0;
};

struct PriceDistribution {
  std::string name;
  std::string query;
  double basePrice = 0.0;
  std::vector<double> samples;  // major units
  Histogram histogram;
  Summary summary;
};

struct MistakeCurve {
  std::string name;
  std::string query;
  std::array<double, 4> weights{};
  std::vector<std::size_t> corruptedCells;
  std::vector<std::array<double, 4>> k;
  std::vector<double> prices;  // major units
  bool nonIncreasing = true;
};

struct CheatTrial {
  std::string dataset;
  std::array<double, 4> trueWeights{};
  std::array<double, 4> informedWeights{};
  std::array<double, 4> randomWeights{};
  double basePrice = 0.0;
  double truePrice = 0.0;
  double informedPrice = 0.0;
  double randomPrice = 0.0;
  /// (p(W') - p(W)) / base price.
  double informedDeviation = 0.0;
  double randomDeviation = 0.0;
};

struct CheatSummary {
  std::size_t trials = 0;
  bool leak = false;
  double informedMean = 0.0;
  double randomMean = 0.0;
  WelchResult test;
  std::size_t purchases = 0;
};

struct TranscriptAudit {
  std::size_t messages = 0;
  std::size_t leaks = 0;
  std::size_t records = 0;
  std::size_t verifyPassed = 0;
  std::size_t checkBalancePassed = 0;
  std::size_t liveChecks = 0;  // checkBalance requests each buyer sends for its latest balance
  std::size_t liveChecksPassed = 0;
  bool clean() const {
    return leaks == 0 && verifyPassed == records && checkBalancePassed == records && liveChecksPassed == liveChecks;
  }
};

struct ExperimentReport {
  std::string experiment;
  std::uint64_t seed = 0;
  std::vector<DatasetTiming> timing;
  std::vector<PriceDistribution> distribution;
  std::vector<MistakeCurve> mistakes;
  std::vector<CheatTrial> cheatTrials;
  std::optional<CheatSummary> cheat;
  std::optional<TranscriptAudit> audit;
  json environment = json::object();
  std::string transcript;  // JSON lines, not part of to_json
};

/// Full report. With includeTimings = false, wall-clock fields and the
/// environment stamp are dropped, leaving the seed-determined payload.
json to_json(const ExperimentReport& report, bool includeTimings = true);
json environment_stamp();
/// "bin_lo,bin_hi,count" rows per dataset.
std::string histogram_csv(const ExperimentReport& report);

// ---------------------------------------------------------------- experiments

/// Every buyer-bound message is scanned; every archived record is checked
/// with Verify by its buyer and with checkBalance at the TTP (each record's
/// post-balance is replayed against the TTP's tracked state at that point).
TranscriptAudit audit_market(Marketplace& market);

ExperimentReport run_timing(const MarketSetup& setup, std::size_t repeats = 1);
ExperimentReport run_distribution(const MarketSetup& setup, std::size_t trials, std::uint64_t seed);
ExperimentReport run_mistakes(const MarketSetup& setup, std::size_t steps, std::size_t cellsPerStep,
                              std::uint64_t seed);

struct CheatOptions {
  bool leak = false;
  /// The adversary buys at its chosen weights every this many trials; 0 never.
  std::size_t purchaseEvery = 5;
};
ExperimentReport run_cheat(const MarketSetup& setup, std::size_t trials, std::uint64_t seed,
                           CheatOptions options = {});

/// Informed-vs-random weights under the null where neither arm has any
/// information: the (1 - alpha) quantile of |mean difference| of relative
/// deviations over `replicas` resampled experiments of `trials` trials.
double cheat_null_threshold(const MarketSetup& setup, std::size_t trials, std::size_t replicas, double alpha,
                            std::uint64_t seed);

struct DemoCheck {
  std::string name;
  std::string expected;
  std::string actual;
  bool pass = false;
};

struct DemoResult {
  std::vector<DemoCheck> checks;
  std::string transcript;
  TranscriptAudit audit;
  bool ok() const;
};

/// Alice's purchase, Bob's purchase and narrowing probes, and a declined
/// quote, on the toy group.
DemoResult run_protocol_demo(const MarketSetup& setup);

}  // namespace fairmarket
