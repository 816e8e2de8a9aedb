#include <doctest.h>

#include <fstream>

#include "fairmarket/error.hpp"
#include "fairmarket/simharness.hpp"
#include "support.hpp"

using namespace fairmarket;
using namespace std::chrono_literals;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

std::array<std::size_t, 4> counters(const QualityProfile& p) { return {p.nAc, p.nMis, p.nExp, p.nVio}; }

}  // namespace

TEST_CASE("durations") {
  CHECK(parse_duration("45s") == 45s);
  CHECK(parse_duration("15m") == 15min);
  CHECK(parse_duration("12h") == 12h);
  CHECK(parse_duration("30d") == 30 * 24h);
  CHECK(parse_duration("90") == 90s);
  CHECK(parse_duration("1y").count() == 31'556'952);
  for (const char* t : {"6y", "30d", "12h", "15m", "45s", "0s"}) CHECK(format_duration(parse_duration(t)) == t);
  for (const char* bad : {"", "y", "-3d", "3w", "1.5h"})
    CHECK(code_of([&] { parse_duration(bad); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("config round trip through files") {
  fmtest::TempDir dir;
  auto setup = demo_setup();
  write_market(setup, dir.path(), "toy");
  const auto cfg = load_market_config(dir.path() / "config.json");
  CHECK(market_config_to_json(parse_market_config(market_config_to_json(cfg))) == market_config_to_json(cfg));
  CHECK(cfg.groupProfile == "toy");
  CHECK(cfg.seed == 127);
  CHECK(cfg.protocol.moneyScale == 1);
  const auto back = materialize(cfg, dir.path());
  REQUIRE(back.datasets.size() == 1);
  const auto& d = back.datasets[0];
  CHECK(d.relation.cardinality() == 3);
  CHECK(d.rules.dependencies.size() == 1);
  CHECK(d.rules.patterns == setup.datasets[0].rules.patterns);
  CHECK(format_query(d.queries.at(0)) == "university:Country=US");
  const MarketManager a(setup), b(back);
  CHECK(a.profiles()[0].k == b.profiles()[0].k);

  // A relative config path must not be applied twice.
  const auto cwd = std::filesystem::current_path();
  std::filesystem::current_path(dir.path().parent_path());
  const auto rel = dir.path().filename() / "config.json";
  CHECK_NOTHROW(materialize(load_market_config(rel), rel.parent_path()));
  std::filesystem::current_path(cwd);
}

TEST_CASE("config validation") {
  const json base = {{"now", "2014-01-01"}, {"datasets", json::array()}};
  CHECK_NOTHROW(parse_market_config(base));
  auto bad = base;
  bad.erase("now");
  CHECK(code_of([&] { parse_market_config(bad); }) == ErrorCode::kInvalidConfig);
  bad = base;
  bad["groupProfile"] = "huge";
  CHECK(code_of([&] { parse_market_config(bad); }) == ErrorCode::kInvalidConfig);
  bad = base;
  bad["moneyScale"] = 0;
  CHECK(code_of([&] { parse_market_config(bad); }) == ErrorCode::kInvalidConfig);
  bad = base;
  bad["datasets"] = json::array({{{"name", "x"}}});
  CHECK(code_of([&] { parse_market_config(bad); }) == ErrorCode::kInvalidConfig);
  CHECK(code_of([] { parse_market_config(json::array()); }) == ErrorCode::kInvalidConfig);

  auto cfg = parse_market_config(base);
  cfg.datasets.push_back({"x", "missing.csv", {{"a", AttrType::kText, false}}, {}, {"x", 1, 0}, {}});
  CHECK(code_of([&] { materialize(cfg, "/nonexistent"); }) == ErrorCode::kIOFailure);
}

TEST_CASE("rules and cost model json") {
  const auto rules = university_dataset().rules;
  CHECK(rules_to_json(parse_rules(rules_to_json(rules))) == rules_to_json(rules));
  const auto model = CleaningCostModel::standard();
  CHECK(cost_model_to_json(parse_cost_model(cost_model_to_json(model))) == cost_model_to_json(model));
  CHECK(code_of([] { parse_cost_model(json::object()); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("desk data") {
  const auto specs = desk_specs(1.0);
  REQUIRE(specs.size() == 5);
  for (const auto& s : desk_specs(0.001)) CHECK(s.rows >= 50);
  const auto spec = desk_specs(0.01)[0];
  const auto a = generate_desk_dataset(spec, 3, desk_now());
  const auto b = generate_desk_dataset(spec, 3, desk_now());
  CHECK(a.relation.cardinality() == spec.rows);
  CHECK(a.relation.arity() == spec.cols);
  CHECK(a.relation.rows() == b.relation.rows());
  CHECK_FALSE(a.queries.empty());
  const auto setup = desk_setup(0.01, 4);
  CHECK(setup.datasets.size() == 5);
  const MarketManager mms(setup);
  std::array<double, 4> mean{};
  for (const auto& p : mms.profiles())
    for (std::size_t i = 0; i < 4; ++i) mean[i] += p.k[i] / 5.0;
  for (std::size_t i = 0; i < 4; ++i) CHECK(mms.params().standard[i] == doctest::Approx(mean[i]));
}

TEST_CASE("stats") {
  const auto s = summarize({1, 2, 4, 8, 16});
  CHECK(s.n == 5);
  CHECK(s.mean == doctest::Approx(6.2));
  CHECK(s.variance == doctest::Approx(37.2));
  CHECK(s.skewness == doctest::Approx(0.8890481348169542));
  CHECK(summarize({}).n == 0);
  CHECK(summarize({3}).variance == 0.0);

  const std::vector<double> a{27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4};
  const std::vector<double> b{27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4};
  const auto w = welch_test(a, b);
  CHECK(w.t == doctest::Approx(-2.455356398286006).epsilon(1e-9));
  CHECK(w.df == doctest::Approx(24.988529290231416).epsilon(1e-9));
  CHECK(w.p == doctest::Approx(0.021378001462866985).epsilon(1e-7));
  CHECK(welch_test(b, a).p == doctest::Approx(w.p));
  CHECK(welch_test({1, 1}, {1, 1}).p == 1.0);
  CHECK(code_of([] { welch_test({1}, {1, 2}); }) == ErrorCode::kInvalidArgument);

  const auto h = histogram({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 5);
  CHECK(h.counts == std::vector<std::size_t>{2, 2, 2, 2, 3});
  CHECK(histogram({2, 2, 2}).counts == std::vector<std::size_t>{3});
}

TEST_CASE("each injection adds defects to one aspect only") {
  const auto spec = desk_specs(0.01)[1];
  auto d = generate_desk_dataset(spec, 11, desk_now());
  Rng rng(5);
  MistakeInjector injector(d.relation, d.rules, desk_now(), rng);
  auto before = assess_all(d.relation, d.rules, desk_now());
  std::array<std::size_t, 4> applied{};
  for (int i = 0; i < 80; ++i) {
    const auto kind = injector.inject_next();
    if (!kind) break;
    const auto idx = static_cast<std::size_t>(*kind);
    ++applied[idx];
    const auto after = assess_all(d.relation, d.rules, desk_now());
    const auto c0 = counters(before), c1 = counters(after);
    for (std::size_t a = 0; a < 4; ++a) {
      if (a != idx) {
        CHECK(c1[a] == c0[a]);
        CHECK(after.k[a] == before.k[a]);
      } else {
        CHECK(after.k[a] <= before.k[a]);
        CHECK(c1[a] != c0[a]);
        if (*kind != Corruption::kFdConflict) CHECK((c1[a] == c0[a] + 1 || c1[a] + 1 == c0[a]));
      }
    }
    before = after;
  }
  for (auto n : applied) CHECK(n > 0);
}

TEST_CASE("an injector stops when nothing is eligible") {
  Relation rel("t", {{"a", AttrType::kText, false}});
  QualityRuleSet rules;
  Rng rng(1);
  MistakeInjector injector(rel, rules, desk_now(), rng);
  CHECK_FALSE(injector.inject_next().has_value());
}

TEST_CASE("experiments are seeded") {
  const auto setup = desk_setup(0.01, 2);
  CHECK(to_json(run_distribution(setup, 20, 9), false) == to_json(run_distribution(setup, 20, 9), false));
  CHECK(to_json(run_mistakes(setup, 4, 3, 9), false) == to_json(run_mistakes(setup, 4, 3, 9), false));
  CHECK(to_json(run_cheat(setup, 20, 9), false) == to_json(run_cheat(setup, 20, 9), false));
  CHECK(to_json(run_cheat(setup, 20, 9), false) != to_json(run_cheat(setup, 20, 10), false));
  CHECK_FALSE(to_json(run_timing(setup), false).contains("environment"));
  CHECK(to_json(run_timing(setup), true).contains("environment"));
}

TEST_CASE("experiment edge cases") {
  auto setup = desk_setup(0.01, 2);
  SUBCASE("one trial and no quality term") {
    setup.params.combinedCoefficient = 0.0;
    const auto r = run_distribution(setup, 1, 1);
    REQUIRE(r.distribution.size() == 5);
    for (const auto& d : r.distribution) {
      REQUIRE(d.samples.size() == 1);
      CHECK(d.samples[0] == doctest::Approx(std::floor(d.basePrice * 100 + 0.5) / 100));
      CHECK(d.summary.variance == 0.0);
    }
    CHECK(r.audit->clean());
    CHECK(code_of([&] { run_distribution(setup, 0, 1); }) == ErrorCode::kInvalidArgument);
  }
  SUBCASE("no corruption keeps the curve flat") {
    const auto r = run_mistakes(setup, 3, 0, 1);
    for (const auto& m : r.mistakes) {
      CHECK(m.nonIncreasing);
      CHECK(std::all_of(m.prices.begin(), m.prices.end(), [&](double p) { return p == m.prices[0]; }));
      CHECK(m.corruptedCells.back() == 0);
    }
  }
  SUBCASE("curves fall as cells are corrupted") {
    const auto r = run_mistakes(setup, 5, 10, 3);
    for (const auto& m : r.mistakes) {
      CHECK(m.nonIncreasing);
      CHECK(m.prices.size() == 6);
      CHECK(m.corruptedCells.back() > 0);
      for (std::size_t s = 1; s < m.prices.size(); ++s) CHECK(m.prices[s] <= m.prices[s - 1]);
    }
  }
  SUBCASE("zero cheat trials") {
    const auto r = run_cheat(setup, 0, 1);
    CHECK_FALSE(r.cheat.has_value());
    CHECK(r.cheatTrials.empty());
  }
  SUBCASE("empty query battery") {
    for (auto& d : setup.datasets) d.queries.clear();
    const auto r = run_timing(setup);
    for (const auto& t : r.timing) {
      CHECK(t.queries == 0);
      CHECK_FALSE(t.avgQuerySeconds.has_value());
    }
  }
}

TEST_CASE("price samples are roughly symmetric") {
  // Seeds 1..6 at full scale give 4 or 5 datasets under |skewness| 1.
  const auto r = run_distribution(desk_setup(1.0, 1), 200, 3);
  std::size_t symmetric = 0;
  for (const auto& d : r.distribution) {
    CHECK(d.samples.size() == 200);
    symmetric += std::abs(d.summary.skewness) < 1.0;
  }
  CHECK(symmetric >= 4);
}

TEST_CASE("cheat audit") {
  const auto setup = desk_setup(0.01, 2);
  const auto clean = run_cheat(setup, 30, 4);
  REQUIRE(clean.audit);
  CHECK(clean.audit->clean());
  CHECK(clean.audit->records == 6);
  const auto leaky = run_cheat(setup, 30, 4, {true, 5});
  CHECK(leaky.audit->leaks > 0);
  CHECK_FALSE(leaky.audit->clean());
  CHECK(leaky.cheat->leak);
  CHECK(leaky.audit->verifyPassed == leaky.audit->records);
}

TEST_CASE("the stored cheat threshold regenerates") {
  std::ifstream in(std::string(FM_FIXTURE_DIR) + "/cheat_threshold.json");
  REQUIRE(in);
  const auto fx = json::parse(in);
  const double t = cheat_null_threshold(desk_setup(fx.at("scale").get<double>(), fx.at("seed").get<std::uint64_t>()),
                                        fx.at("trials").get<std::size_t>(), fx.at("replicas").get<std::size_t>(),
                                        fx.at("alpha").get<double>(), fx.at("seed").get<std::uint64_t>());
  CHECK(t == fx.at("threshold").get<double>());
}

TEST_CASE("demo") {
  const auto r = run_protocol_demo(demo_setup());
  for (const auto& c : r.checks) {
    INFO(c.name, ": expected ", c.expected, ", got ", c.actual);
    CHECK(c.pass);
  }
  CHECK(r.ok());
  CHECK(code_of([] { run_protocol_demo(desk_setup(0.01, 1)); }) == ErrorCode::kInvalidConfig);
}
