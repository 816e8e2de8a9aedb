#include <doctest.h>

#include <algorithm>
#include <random>

#include "fairmarket/error.hpp"
#include "fairmarket/relation.hpp"
#include "fairmarket/rng.hpp"
#include "support.hpp"

using namespace fairmarket;

namespace {

std::vector<Attribute> university_schema() {
  return {{"Uname", AttrType::kText, false},   {"Location", AttrType::kText, false},
          {"Country", AttrType::kText, false}, {"Country_Code", AttrType::kText, false},
          {"Apply_Deadline", AttrType::kText, false}, {"Min_Score", AttrType::kReal, false}};
}

Relation university() {
  fmtest::TempDir dir;
  return load_csv(dir.write("u.csv", fmtest::kUniversityCsv), university_schema(), "university");
}

std::vector<std::size_t> ids(const ResultSet& r) { return r.rowIds; }

}  // namespace

TEST_CASE("load_csv reads the university table") {
  const auto rel = university();
  CHECK(rel.cardinality() == 3);
  CHECK(rel.arity() == 6);
  CHECK(rel.cell_total() == 18);
  CHECK_FALSE(rel.cell(2, 4).has_value());
  std::size_t present = 0;
  for (const auto& row : rel.rows())
    for (const auto& c : row) present += c.has_value();
  CHECK(present == 17);
  CHECK(rel.cell(2, 5)->as_number() == doctest::Approx(3.5));
}

TEST_CASE("load_csv edge cases") {
  fmtest::TempDir dir;
  SUBCASE("header only") {
    const auto rel = load_csv(dir.write("h.csv", "Uname,Location,Country,Country_Code,Apply_Deadline,Min_Score\n"),
                              university_schema());
    CHECK(rel.cardinality() == 0);
  }
  SUBCASE("unparseable typed cell stays as raw text") {
    const auto p = dir.write("i.csv", "a,b\n1,x\nabc,y\n");
    const auto rel = load_csv(p, {{"a", AttrType::kInteger, false}, {"b", AttrType::kText, false}});
    CHECK(rel.cardinality() == 2);
    CHECK(rel.cell(1, 0)->text() == "abc");
    CHECK_FALSE(rel.cell(1, 0)->conforms());
    CHECK(rel.cell(0, 0)->conforms());
  }
  SUBCASE("header mismatch") {
    const auto p = dir.write("m.csv", "a,c\n1,2\n");
    try {
      load_csv(p, {{"a", AttrType::kInteger, false}, {"b", AttrType::kText, false}});
      FAIL("expected HeaderMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kHeaderMismatch);
    }
  }
  SUBCASE("missing file") {
    try {
      load_csv(dir.path() / "nope.csv", university_schema());
      FAIL("expected IOFailure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kIOFailure);
    }
  }
}

TEST_CASE("parse_csv handles quoting") {
  const auto recs = parse_csv("a,\"b,c\",\"d\"\"e\"\r\n1,,\"line\nbreak\"\n");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0] == std::vector<std::string>{"a", "b,c", "d\"e"});
  CHECK(recs[1] == std::vector<std::string>{"1", "", "line\nbreak"});
}

TEST_CASE("write_csv round-trips") {
  fmtest::TempDir dir;
  Relation rel("t", {{"a", AttrType::kText, false}, {"b", AttrType::kInteger, false}});
  rel.append({"x,y", "1"});
  rel.append({std::nullopt, "2"});
  rel.append({"say \"hi\"", std::nullopt});
  write_csv(dir.path() / "t.csv", rel);
  const auto back = load_csv(dir.path() / "t.csv", rel.attributes(), "t");
  REQUIRE(back.cardinality() == 3);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(back.cell(r, c).has_value() == rel.cell(r, c).has_value());
      if (rel.cell(r, c)) CHECK(back.cell(r, c)->text() == rel.cell(r, c)->text());
    }
}

TEST_CASE("dates and instants") {
  CHECK(parse_date("2013-12-25").has_value());
  CHECK_FALSE(parse_date("2013-02-30").has_value());
  CHECK_FALSE(parse_date("12/12/2013").has_value());
  const auto t = parse_instant("2014-01-01T12:30:00Z");
  REQUIRE(t);
  CHECK(format_instant(*t) == "2014-01-01T12:30:00Z");
  CHECK(*parse_instant("2014-01-01") == *parse_instant("2014-01-01T00:00:00"));
  CHECK(format_date(*parse_date("2020-02-29")) == "2020-02-29");
}

TEST_CASE("run_query selection") {
  const auto rel = university();
  CHECK(ids(run_query(rel, parse_query("university:Country=US"))) == std::vector<std::size_t>{0, 2});
  CHECK(run_query(rel, parse_query("university")).size() == 3);

  SelectionQuery blank{"university", {{"Apply_Deadline", Comparator::kEq, ""}}, std::nullopt};
  CHECK(run_query(rel, blank).size() == 0);
  SelectionQuery ne{"university", {{"Apply_Deadline", Comparator::kNe, "x"}}, std::nullopt};
  CHECK(ids(run_query(rel, ne)) == std::vector<std::size_t>{0, 1});

  CHECK(ids(run_query(rel, parse_query("university:Min_Score>=60"))) == std::vector<std::size_t>{0, 1});
  CHECK(ids(run_query(rel, parse_query("university:Min_Score<10"))) == std::vector<std::size_t>{2});
  CHECK(ids(run_query(rel, parse_query("university:Location~York"))) == std::vector<std::size_t>{0, 2});
  CHECK(ids(run_query(rel, parse_query("university:Country=US,Min_Score>50"))) == std::vector<std::size_t>{0});
}

TEST_CASE("run_query projection") {
  const auto rel = university();
  const auto r = run_query(rel, parse_query("university:Country=UK|Uname,Min_Score"));
  CHECK(r.columns == std::vector<std::string>{"Uname", "Min_Score"});
  REQUIRE(r.size() == 1);
  CHECK(r.rows[0][0] == std::optional<std::string>("Uni_B"));
  CHECK(r.rows[0][1] == std::optional<std::string>("85"));
}

TEST_CASE("run_query errors") {
  const auto rel = university();
  try {
    run_query(rel, parse_query("university:Nope=1"));
    FAIL("expected UnknownAttribute");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownAttribute);
  }
  try {
    run_query(rel, parse_query("other:Country=US"));
    FAIL("expected UnknownRelation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownRelation);
  }
  CHECK_THROWS_AS(parse_query("university:Country"), Error);
  CHECK_THROWS_AS(parse_query(":a=1"), Error);
}

TEST_CASE("format_query inverts parse_query") {
  for (const char* text : {"university", "university:Country=US", "t:a!=1,b<=2,c>3,d~x|a,b", "t:a>=1.5,b<0|c"}) {
    const auto q = parse_query(text);
    CHECK(format_query(q) == text);
    const auto again = parse_query(format_query(q));
    CHECK(again.relation == q.relation);
    CHECK(again.predicates.size() == q.predicates.size());
    CHECK(again.projection == q.projection);
  }
}

TEST_CASE("property: conjuncts never grow the result") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    Relation rel("r", {{"a", AttrType::kInteger, false}, {"b", AttrType::kText, false}, {"c", AttrType::kReal, false}});
    const auto n = rng.between(0, 30);
    for (int i = 0; i < n; ++i) {
      auto maybe = [&](std::string v) -> std::optional<std::string> {
        return rng.below(8) == 0 ? std::nullopt : std::optional<std::string>(std::move(v));
      };
      rel.append({maybe(std::to_string(rng.between(0, 5))), maybe(std::string(1, static_cast<char>('p' + rng.below(4)))),
                  maybe(std::to_string(rng.between(0, 100) / 10.0))});
    }
    const std::vector<std::string> ops{"=", "!=", "<", "<=", ">", ">="};
    std::string text = "r";
    std::size_t last = run_query(rel, parse_query(text)).size();
    CHECK(last == rel.cardinality());
    for (int k = 0; k < 4; ++k) {
      const auto col = rng.below(3);
      std::string term;
      if (col == 0) term = "a" + ops[rng.below(ops.size())] + std::to_string(rng.between(0, 5));
      if (col == 1) term = std::string("b") + (rng.below(2) ? "=" : "~") + std::string(1, static_cast<char>('p' + rng.below(4)));
      if (col == 2) term = "c" + ops[rng.below(ops.size())] + std::to_string(rng.between(0, 10));
      text += (k == 0 ? ":" : ",") + term;
      const auto now = run_query(rel, parse_query(text)).size();
      CHECK(now <= last);
      last = now;
    }
  }
}

TEST_CASE("base_price") {
  CHECK(base_price({"r", 1.0, 0.0}, 3) == doctest::Approx(3.0));
  CHECK(base_price({"r", 0.0, 2.0}, 100) == doctest::Approx(2.0));
  CHECK(base_price({"r", 0.5, 1.0}, 10) == doctest::Approx(6.0));
  const PricePoint pp{"r", 0.37, 1.25};
  for (std::size_t k = 0; k < 200; ++k) CHECK(base_price(pp, k + 1) >= base_price(pp, k));
}
