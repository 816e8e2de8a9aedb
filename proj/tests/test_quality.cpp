#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fairmarket/error.hpp"
#include "fairmarket/quality.hpp"
#include "fairmarket/rng.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fairmarket;

namespace {

Relation university() {
  Relation rel("university", {{"Uname", AttrType::kText, false},
                              {"Location", AttrType::kText, false},
                              {"Country", AttrType::kText, false},
                              {"Country_Code", AttrType::kText, false},
                              {"Apply_Deadline", AttrType::kText, false},
                              {"Min_Score", AttrType::kReal, false}});
  rel.append({"Uni_A", "New York", "US", "001", "2013-Dec-25", "90"});
  rel.append({"Uni_B", "London", "UK", "0044", "12/12/2013", "85"});
  rel.append({"Uni_C", "New York", "US", "002", std::nullopt, "3.5"});
  return rel;
}

QualityRuleSet university_rules() {
  QualityRuleSet r;
  r.patterns["Apply_Deadline"] = R"(\d{4}-[A-Za-z]{3}-\d{2})";
  r.domains["Min_Score"] = Domain{60.0, 100.0, {}};
  r.nMin = 2;
  r.necessaryAttrs = {"Uname", "Country"};
  r.dependencies.push_back({{"Country"}, "Country_Code", {}, std::nullopt});
  return r;
}

const Instant kNow = *parse_instant("2014-01-01T00:00:00Z");

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

}  // namespace

TEST_CASE("violation_score against a reference log") {
  CHECK(violation_score(0.0) == 6.0);
  CHECK(violation_score(1.0) == 0.0);
  CHECK(violation_score(3.0) == 0.0);
  CHECK(violation_score(1e-9) == 6.0);
  CHECK(violation_score(0.5, 2.0) == doctest::Approx(std::log10(2.0)).epsilon(1e-14));
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double r = std::pow(10.0, -6.0 * rng.unit());
    const double k = violation_score(r);
    CHECK(k >= 0.0);
    CHECK(k <= 6.0);
    CHECK(std::abs(k - (-std::log(r) / std::log(10.0))) < 1e-12);
  }
}

TEST_CASE("university table scores") {
  const auto rel = university();
  const auto rules = university_rules();
  SUBCASE("accuracy") {
    const auto a = assess_accuracy(rel, rules);
    CHECK(a.nAc == 2);
    CHECK(std::abs(a.k - (-std::log10(2.0 / 18.0))) < 1e-9);
    CHECK(std::abs(a.k - 0.954) < 1e-3);
  }
  SUBCASE("completeness") {
    const auto c = assess_completeness(rel, rules);
    CHECK(c.nMis == 1);
    CHECK(c.necessaryCount == 2);
    CHECK(c.coveredNecessary == 2);
    CHECK(std::abs(c.inner - 1.0 / 54.0) < 1e-12);
    CHECK(std::abs(c.k - (-std::log10(1.0 / 54.0))) < 1e-9);
    CHECK(std::abs(c.k - 1.732) < 1e-3);
  }
  SUBCASE("timeliness is vacuous without timestamp attributes") {
    const auto t = assess_timeliness(rel, rules, kNow);
    CHECK(t.timestampAttrCount == 0);
    CHECK(t.nExp == 0);
    CHECK(t.k == 6.0);
  }
  SUBCASE("consistency") {
    const auto c = assess_consistency(rel, rules);
    CHECK(c.nVio == 2);
    CHECK(std::abs(c.k - (-std::log10(2.0 / 3.0))) < 1e-9);
    CHECK(std::abs(c.k - 0.176) < 1e-3);
  }
  SUBCASE("assess_all composes and is deterministic") {
    const auto p = assess_all(rel, rules, kNow);
    CHECK(std::abs(p.k[0] - (-std::log10(2.0 / 18.0))) < 1e-9);
    CHECK(std::abs(p.k[1] - (-std::log10(1.0 / 54.0))) < 1e-9);
    CHECK(p.k[2] == 6.0);
    CHECK(std::abs(p.k[3] - (-std::log10(2.0 / 3.0))) < 1e-9);
    CHECK(p.cellTotal == 18);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(p.violationRates[i] - std::pow(10.0, -p.k[i])) < 1e-15);
    const auto q = assess_all(rel, rules, kNow);
    CHECK(p.k == q.k);
    CHECK(p.nAc == q.nAc);
    CHECK(p.nVio == q.nVio);
  }
}

TEST_CASE("accuracy edge cases") {
  Relation rel("r", {{"a", AttrType::kInteger, false}, {"b", AttrType::kText, false}});
  rel.append({"1", "x"});
  rel.append({"2", "y"});
  QualityRuleSet rules;
  rules.necessaryAttrs = {"a"};
  CHECK(assess_accuracy(rel, rules).k == 6.0);

  SUBCASE("every cell wrong") {
    rules.patterns["b"] = "[0-9]+";
    rules.domains["a"] = Domain{10.0, std::nullopt, {}};
    const auto a = assess_accuracy(rel, rules);
    CHECK(a.nAc == 4);
    CHECK(a.k == 0.0);
  }
  SUBCASE("a cell breaking several rules counts once") {
    rules.patterns["a"] = "[5-9]";
    rules.domains["a"] = Domain{5.0, 9.0, {}};
    rules.requiredTypes["b"] = AttrType::kInteger;
    CHECK(assess_accuracy(rel, rules).nAc == 4);
  }
  SUBCASE("wrong declared type and enumerated domain") {
    Relation r2("r", {{"a", AttrType::kInteger, false}, {"b", AttrType::kText, false}});
    r2.append({"abc", "red"});
    r2.append({"3", "mauve"});
    r2.append({std::nullopt, std::nullopt});
    rules.domains["b"] = Domain{std::nullopt, std::nullopt, {"red", "green"}};
    const auto a = assess_accuracy(r2, rules);
    CHECK(a.nAc == 2);  // "abc" and "mauve"; missing cells are not inaccurate
  }
  CHECK(code_of([&] { assess_accuracy(Relation("e", {{"a", AttrType::kText, false}}), rules); }) ==
        ErrorCode::kEmptyRelation);
}

TEST_CASE("completeness edge cases") {
  Relation rel("r", {{"a", AttrType::kText, false}, {"b", AttrType::kText, false}});
  for (int i = 0; i < 3; ++i) rel.append({"x", "y"});
  QualityRuleSet rules;
  rules.necessaryAttrs = {"a"};
  CHECK(assess_completeness(rel, rules).k == 6.0);

  rules.nMin = 200;
  const auto c = assess_completeness(rel, rules);
  CHECK(c.inner == doctest::Approx(66.0 / 3.0));
  CHECK(c.k == 0.0);

  rules.nMin = 1;
  rules.necessaryAttrs = {"a", "z"};
  const auto half = assess_completeness(rel, rules);
  CHECK(half.coveredNecessary == 1);
  CHECK(std::abs(half.k - (-std::log10(1.0 / 6.0))) < 1e-12);

  rules.necessaryAttrs.clear();
  CHECK(code_of([&] { assess_completeness(rel, rules); }) == ErrorCode::kEmptyNecessarySet);
}

TEST_CASE("timeliness") {
  Relation rel("r", {{"id", AttrType::kText, false}, {"seen", AttrType::kDate, true}});
  rel.append({"a", "2013-06-01"});
  rel.append({"b", "2005-01-01"});
  rel.append({"c", "2013-12-01"});
  QualityRuleSet rules;
  rules.necessaryAttrs = {"id"};
  rules.expiry["seen"] = std::chrono::days(365 * 6);

  const auto t = assess_timeliness(rel, rules, kNow);
  CHECK(t.timestampAttrCount == 1);
  CHECK(t.nExp == 1);
  CHECK(std::abs(t.k - (-std::log10(1.0 / 3.0))) < 1e-12);

  rules.expiry["seen"] = std::chrono::days(1);
  CHECK(assess_timeliness(rel, rules, kNow).k == 0.0);

  SUBCASE("boundary: exactly at expiry is still fresh") {
    rules.expiry["seen"] = kNow - *parse_instant("2013-12-01");
    CHECK(assess_timeliness(rel, rules, kNow).nExp == 2);
  }
  SUBCASE("missing and unparseable timestamps are not expired") {
    rel.set_cell(0, 1, std::nullopt);
    rel.set_cell(1, 1, "soon");
    CHECK(assess_timeliness(rel, rules, kNow).nExp == 1);
  }
  SUBCASE("a timestamp attribute needs an expiry") {
    rules.expiry.clear();
    CHECK(code_of([&] { assess_timeliness(rel, rules, kNow); }) == ErrorCode::kInvalidConfig);
  }
}

TEST_CASE("consistency edge cases") {
  Relation rel("r", {{"k", AttrType::kText, false}, {"v", AttrType::kInteger, false}, {"c", AttrType::kText, false}});
  rel.append({"a", "1", "x"});
  rel.append({"a", "2", "x"});
  rel.append({"a", "3", "y"});
  QualityRuleSet rules;
  CHECK(assess_consistency(rel, rules).k == 6.0);

  rules.dependencies.push_back({{"k"}, "v", {}, std::nullopt});
  CHECK(assess_consistency(rel, rules).nVio == 3);
  CHECK(assess_consistency(rel, rules).k == 0.0);

  SUBCASE("conditional dependency only looks at matching tuples") {
    rules.dependencies[0].condition["c"] = "y";
    CHECK(assess_consistency(rel, rules).nVio == 0);
    rules.dependencies[0].condition["c"] = "x";
    CHECK(assess_consistency(rel, rules).nVio == 2);
  }
  SUBCASE("constant conditional dependency") {
    rules.dependencies[0] = {{"c"}, "v", {{"c", "x"}}, std::string("1")};
    CHECK(assess_consistency(rel, rules).nVio == 1);
  }
  SUBCASE("typed equality: 01 and 1 agree") {
    rel.set_cell(1, 1, "01");
    rel.set_cell(2, 1, "1");
    CHECK(assess_consistency(rel, rules).nVio == 0);
  }
  SUBCASE("unknown attribute") {
    rules.dependencies.push_back({{"nope"}, "v", {}, std::nullopt});
    CHECK(code_of([&] { assess_consistency(rel, rules); }) == ErrorCode::kUnknownAttributeInDependency);
  }
}

TEST_CASE("consistency matches the pairwise oracle on small relations") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto [rel, rules] = fmtest::random_fd_case(rng);
    const auto n = rel.cardinality();
    const auto got = assess_consistency(rel, rules);
    const auto want = fmtest::brute_force_violations(rel, rules);
    CHECK(got.nVio == want);
    CHECK(std::abs(got.k - violation_score(static_cast<double>(want) / static_cast<double>(n))) < 1e-12);
  }
}

TEST_CASE("property: single-cell corruption never raises its aspect's score") {
  Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    Relation rel("r", {{"code", AttrType::kText, false},
                       {"region", AttrType::kText, false},
                       {"score", AttrType::kReal, false},
                       {"seen", AttrType::kDate, true}});
    const auto n = rng.between(2, 25);
    for (int r = 0; r < n; ++r) {
      const auto g = rng.between(0, 4);
      rel.append({"C" + std::to_string(g), "R" + std::to_string(g), std::to_string(rng.between(0, 100)),
                  format_date(std::chrono::floor<std::chrono::days>(kNow) - std::chrono::days(rng.between(0, 900)))});
    }
    QualityRuleSet rules;
    rules.patterns["code"] = "C[0-9]";
    rules.domains["score"] = Domain{0.0, 100.0, {}};
    rules.necessaryAttrs = {"code"};
    rules.expiry["seen"] = std::chrono::days(365);
    rules.dependencies.push_back({{"code"}, "region", {}, std::nullopt});

    for (int step = 0; step < 10; ++step) {
      const auto before = assess_all(rel, rules, kNow);
      const auto row = rng.below(rel.cardinality());
      const auto kind = rng.below(4);
      std::size_t aspect = kind;
      if (kind == 0) rel.set_cell(row, 2, "-5");
      if (kind == 1) rel.set_cell(row, rng.below(4), std::nullopt);
      if (kind == 2) rel.set_cell(row, 3, "2000-01-01");
      if (kind == 3) {
        // A new conflict only; rewriting an already conflicting tuple could repair its group.
        const auto bad = violating_rows(rel, rules);
        if (std::find(bad.begin(), bad.end(), row) != bad.end()) continue;
        rel.set_cell(row, 1, "R" + std::to_string(rng.between(5, 9)));
      }
      const auto after = assess_all(rel, rules, kNow);
      CHECK(after.k[aspect] <= before.k[aspect]);
    }
  }
}

TEST_CASE("rule set validation") {
  QualityRuleSet r;
  r.necessaryAttrs = {"a"};
  CHECK_NOTHROW(r.validate());
  r.completenessWeights = {0.5, 0.5, 0.5};
  CHECK(code_of([&] { r.validate(); }) == ErrorCode::kInvalidConfig);
  r.completenessWeights = {1.0, 0.0, 0.0};
  r.nMin = 0;
  CHECK(code_of([&] { r.validate(); }) == ErrorCode::kInvalidConfig);
  r.nMin = 1;
  r.patterns["a"] = "(";
  CHECK(code_of([&] { r.validate(); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("cell checker on single cells") {
  const auto rel = university();
  const auto rules = university_rules();
  CellChecker checker(rel, rules);
  CHECK(checker.inaccurate(4, Cell("12/12/2013", AttrType::kText)));
  CHECK_FALSE(checker.inaccurate(4, Cell("2014-Jan-01", AttrType::kText)));
  CHECK(checker.inaccurate(5, Cell("101", AttrType::kReal)));
  CHECK_FALSE(checker.inaccurate(5, Cell("60", AttrType::kReal)));
  CHECK(violating_rows(rel, rules) == std::vector<std::size_t>{0, 2});
}
