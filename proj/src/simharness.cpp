#include "fairmarket/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <future>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

#include "fairmarket/error.hpp"

namespace fairmarket {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::int64_t kYearSeconds = 31'556'952;  // 365.2425 days
constexpr std::int64_t kDaySeconds = 86'400;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::array<double, 4> arr(const WeightVector& w) { return w.values(); }

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorCode::kInvalidConfig, where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, where + ": bad '" + key + "': " + e.what());
  }
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIOFailure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------- config

std::chrono::seconds parse_duration(const std::string& text) {
  if (text.empty()) throw Error(ErrorCode::kInvalidConfig, "empty duration");
  std::int64_t unit = 1;
  std::string digits = text;
  switch (text.back()) {
    case 'y': unit = kYearSeconds; break;
    case 'd': unit = kDaySeconds; break;
    case 'h': unit = 3600; break;
    case 'm': unit = 60; break;
    case 's': unit = 1; break;
    default: digits.push_back(' ');
  }
  digits.pop_back();
  std::int64_t n = 0;
  try {
    std::size_t used = 0;
    n = std::stoll(digits, &used);
    if (used != digits.size() || n < 0) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidConfig, "bad duration '" + text + "'");
  }
  return std::chrono::seconds(n * unit);
}

std::string format_duration(std::chrono::seconds d) {
  const auto s = d.count();
  if (s != 0 && s % kYearSeconds == 0) return std::to_string(s / kYearSeconds) + "y";
  if (s != 0 && s % kDaySeconds == 0) return std::to_string(s / kDaySeconds) + "d";
  if (s != 0 && s % 3600 == 0) return std::to_string(s / 3600) + "h";
  if (s != 0 && s % 60 == 0) return std::to_string(s / 60) + "m";
  return std::to_string(s) + "s";
}

QualityRuleSet parse_rules(const json& j) {
  QualityRuleSet r;
  try {
    if (j.contains("patterns")) r.patterns = j.at("patterns").get<std::map<std::string, std::string>>();
    if (j.contains("domains")) {
      for (const auto& [attr, d] : j.at("domains").items()) {
        Domain dom;
        if (d.contains("min") && !d.at("min").is_null()) dom.min = d.at("min").get<double>();
        if (d.contains("max") && !d.at("max").is_null()) dom.max = d.at("max").get<double>();
        if (d.contains("values")) dom.values = d.at("values").get<std::vector<std::string>>();
        r.domains[attr] = std::move(dom);
      }
    }
    if (j.contains("requiredTypes"))
      for (const auto& [attr, t] : j.at("requiredTypes").items()) r.requiredTypes[attr] = parse_attr_type(t.get<std::string>());
    if (j.contains("nMin")) r.nMin = j.at("nMin").get<std::size_t>();
    if (j.contains("necessary")) r.necessaryAttrs = j.at("necessary").get<std::set<std::string>>();
    if (j.contains("completenessWeights"))
      r.completenessWeights = j.at("completenessWeights").get<std::array<double, 3>>();
    if (j.contains("expiry"))
      for (const auto& [attr, e] : j.at("expiry").items()) r.expiry[attr] = parse_duration(e.get<std::string>());
    if (j.contains("dependencies")) {
      for (const auto& d : j.at("dependencies")) {
        Dependency dep;
        dep.lhs = d.at("lhs").get<std::vector<std::string>>();
        dep.rhs = d.at("rhs").get<std::string>();
        if (d.contains("condition")) dep.condition = d.at("condition").get<std::map<std::string, std::string>>();
        if (d.contains("rhsConstant") && !d.at("rhsConstant").is_null())
          dep.rhsConstant = d.at("rhsConstant").get<std::string>();
        r.dependencies.push_back(std::move(dep));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("rules: ") + e.what());
  }
  r.validate();
  return r;
}

json rules_to_json(const QualityRuleSet& r) {
  json j;
  j["patterns"] = r.patterns;
  json domains = json::object();
  for (const auto& [attr, d] : r.domains) {
    json dj = json::object();
    if (d.min) dj["min"] = *d.min;
    if (d.max) dj["max"] = *d.max;
    if (!d.values.empty()) dj["values"] = d.values;
    domains[attr] = dj;
  }
  j["domains"] = domains;
  json types = json::object();
  for (const auto& [attr, t] : r.requiredTypes) types[attr] = to_string(t);
  j["requiredTypes"] = types;
  j["nMin"] = r.nMin;
  j["necessary"] = r.necessaryAttrs;
  j["completenessWeights"] = r.completenessWeights;
  json expiry = json::object();
  for (const auto& [attr, e] : r.expiry) expiry[attr] = format_duration(e);
  j["expiry"] = expiry;
  json deps = json::array();
  for (const auto& d : r.dependencies) {
    json dj{{"lhs", d.lhs}, {"rhs", d.rhs}};
    if (!d.condition.empty()) dj["condition"] = d.condition;
    if (d.rhsConstant) dj["rhsConstant"] = *d.rhsConstant;
    deps.push_back(dj);
  }
  j["dependencies"] = deps;
  return j;
}

CleaningCostModel parse_cost_model(const json& j) {
  std::array<std::vector<CleaningLevel>, 4> levels;
  for (auto a : kAspects) {
    const std::string name = to_string(a);
    if (!j.contains(name)) throw Error(ErrorCode::kInvalidConfig, "costModel: missing '" + name + "'");
    for (const auto& l : j.at(name)) {
      levels[static_cast<std::size_t>(a)].push_back({required<double>(l, "lo", name), required<double>(l, "hi", name),
                                                     required<double>(l, "cost", name), l.value("method", "")});
    }
  }
  return CleaningCostModel(std::move(levels));
}

json cost_model_to_json(const CleaningCostModel& model) {
  json j = json::object();
  for (auto a : kAspects) {
    json lv = json::array();
    for (const auto& l : model.levels(a)) lv.push_back({{"lo", l.lo}, {"hi", l.hi}, {"cost", l.cost}, {"method", l.method}});
    j[to_string(a)] = lv;
  }
  return j;
}

MarketConfig parse_market_config(const json& j) {
  MarketConfig c;
  const std::string where = "config";
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "config must be a JSON object");
  try {
    c.seed = j.value("seed", std::uint64_t{1});
    c.groupProfile = j.value("groupProfile", std::string("test"));
    GroupParams::from_profile(c.groupProfile);
    c.params.baselineMode = parse_baseline_mode(j.value("baselineMode", std::string("substituteK")));
    c.protocol.ttpEscrow = j.value("ttpEscrow", false);
    c.protocol.moneyScale = j.value("moneyScale", std::int64_t{100});
    c.protocol.sessionTtl = j.value("sessionTtl", std::uint64_t{100});
    c.protocol.rangeSearchCap = j.value("rangeSearchCap", std::int64_t{1'000'000});
    c.params.kmax = j.value("kmax", kDefaultKmax);
    const auto now = parse_instant(required<std::string>(j, "now", where));
    if (!now) throw Error(ErrorCode::kInvalidConfig, "config: 'now' is not an ISO-8601 time");
    c.now = *now;
    if (j.contains("market")) {
      const auto& m = j.at("market");
      if (m.contains("S") && !m.at("S").is_null()) {
        c.params.standard = m.at("S").get<std::array<double, 4>>();
        c.deriveStandard = false;
      }
      c.params.combinedCoefficient = m.value("C", c.params.combinedCoefficient);
      c.params.additiveCoefficient = m.value("E", c.params.additiveCoefficient);
      c.params.costNormalizer = m.value("gamma", c.params.costNormalizer);
    }
    if (j.contains("rangePolicy")) {
      c.protocol.range.rho = j.at("rangePolicy").value("rho", c.protocol.range.rho);
      c.protocol.range.allowDegenerate = j.at("rangePolicy").value("allowDegenerate", false);
    }
    if (j.contains("costModel")) c.costModel = parse_cost_model(j.at("costModel"));
    for (const auto& d : required<json>(j, "datasets", where)) {
      DatasetConfig dc;
      dc.name = required<std::string>(d, "name", "dataset");
      const std::string dw = "dataset '" + dc.name + "'";
      dc.csv = required<std::string>(d, "csv", dw);
      for (const auto& a : required<json>(d, "schema", dw)) {
        dc.schema.push_back({required<std::string>(a, "name", dw), parse_attr_type(a.value("type", std::string("text"))),
                             a.value("timestamp", false)});
      }
      dc.rules = parse_rules(d.value("rules", json::object()));
      const json price = d.value("price", json::object());
      dc.price = {dc.name, price.value("perTupleFee", 0.0), price.value("flatFee", 0.0)};
      dc.queries = d.value("queries", std::vector<std::string>{});
      c.datasets.push_back(std::move(dc));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("config: ") + e.what());
  }
  if (c.protocol.moneyScale < 1) throw Error(ErrorCode::kInvalidConfig, "moneyScale must be positive");
  c.params.validate();
  c.protocol.range.validate();
  return c;
}

MarketConfig load_market_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(slurp(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, path.string() + ": " + e.what());
  }
  auto c = parse_market_config(j);
  for (auto& d : c.datasets)
    if (d.csv.is_relative()) d.csv = std::filesystem::absolute(path).parent_path() / d.csv;
  return c;
}

json market_config_to_json(const MarketConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["groupProfile"] = c.groupProfile;
  j["baselineMode"] = to_string(c.params.baselineMode);
  j["ttpEscrow"] = c.protocol.ttpEscrow;
  j["moneyScale"] = c.protocol.moneyScale;
  j["sessionTtl"] = c.protocol.sessionTtl;
  j["rangeSearchCap"] = c.protocol.rangeSearchCap;
  j["now"] = format_instant(c.now);
  j["kmax"] = c.params.kmax;
  j["market"] = {{"S", c.deriveStandard ? json(nullptr) : json(c.params.standard)},
                 {"C", c.params.combinedCoefficient},
                 {"E", c.params.additiveCoefficient},
                 {"gamma", c.params.costNormalizer}};
  j["rangePolicy"] = {{"rho", c.protocol.range.rho}, {"allowDegenerate", c.protocol.range.allowDegenerate}};
  j["costModel"] = cost_model_to_json(c.costModel);
  json ds = json::array();
  for (const auto& d : c.datasets) {
    json schema = json::array();
    for (const auto& a : d.schema) schema.push_back({{"name", a.name}, {"type", to_string(a.type)}, {"timestamp", a.effectiveTimestamp}});
    ds.push_back({{"name", d.name},
                  {"csv", d.csv.generic_string()},
                  {"schema", schema},
                  {"rules", rules_to_json(d.rules)},
                  {"price", {{"perTupleFee", d.price.perTupleFee}, {"flatFee", d.price.flatFee}}},
                  {"queries", d.queries}});
  }
  j["datasets"] = ds;
  return j;
}

MarketSetup materialize(const MarketConfig& c, const std::filesystem::path& baseDir) {
  MarketSetup s;
  for (const auto& d : c.datasets) {
    const auto path = d.csv.is_relative() ? baseDir / d.csv : d.csv;
    VendorDataset v{load_csv(path, d.schema, d.name), d.rules, d.price, {}};
    v.price.relation = d.name;
    for (const auto& q : d.queries) v.queries.push_back(parse_query(q));
    s.datasets.push_back(std::move(v));
  }
  s.params = c.params;
  s.deriveStandard = c.deriveStandard;
  s.costModel = c.costModel;
  s.group = GroupParams::from_profile(c.groupProfile);
  s.protocol = c.protocol;
  s.now = c.now;
  s.seed = c.seed;
  return s;
}

// ---------------------------------------------------------------- data

VendorDataset university_dataset() {
  Relation rel("university", {{"Uname", AttrType::kText, false},
                              {"Location", AttrType::kText, false},
                              {"Country", AttrType::kText, false},
                              {"Country_Code", AttrType::kText, false},
                              {"Apply_Deadline", AttrType::kText, false},
                              {"Min_Score", AttrType::kReal, false}});
  rel.append({"Uni_A", "New York", "US", "001", "2013-Dec-25", "90"});
  rel.append({"Uni_B", "London", "UK", "0044", "12/12/2013", "85"});
  rel.append({"Uni_C", "New York", "US", "002", std::nullopt, "3.5"});
  QualityRuleSet rules;
  rules.patterns["Apply_Deadline"] = R"(\d{4}-[A-Za-z]{3}-\d{2})";
  rules.domains["Min_Score"] = Domain{60.0, 100.0, {}};
  rules.nMin = 2;
  rules.necessaryAttrs = {"Uname", "Country"};
  rules.dependencies.push_back({{"Country"}, "Country_Code", {}, std::nullopt});
  PricePoint price{"university", 1.5, 0.0};
  return {std::move(rel), std::move(rules), price, {parse_query("university:Country=US")}};
}

MarketSetup demo_setup() {
  MarketSetup s;
  s.datasets.push_back(university_dataset());
  s.deriveStandard = true;
  s.group = GroupParams::toy();
  s.protocol.moneyScale = 1;
  s.protocol.range.rho = 1.0;
  s.now = *parse_instant("2014-01-01T00:00:00Z");
  s.seed = 127;  // draws g_1 = 3 and the [1,4] quotes of the walkthrough
  return s;
}

std::vector<DeskSpec> desk_specs(double scale) {
  const std::vector<DeskSpec> base{{"university", 590, 12},
                                   {"weather", 20750, 17},
                                   {"country", 206, 27},
                                   {"gdp", 72900, 8},
                                   {"philanthropy", 2798, 9}};
  std::vector<DeskSpec> out;
  for (auto s : base) {
    s.rows = std::max<std::size_t>(50, static_cast<std::size_t>(std::llround(static_cast<double>(s.rows) * scale)));
    out.push_back(s);
  }
  return out;
}

Instant desk_now() { return *parse_instant("2024-01-01T00:00:00Z"); }

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

std::string fixed2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string code_for(std::size_t group) {
  std::string s(3, 'A');
  std::size_t g = group;
  for (int i = 2; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = static_cast<char>('A' + g % 26);
    g /= 26;
  }
  char digits[8];
  std::snprintf(digits, sizeof digits, "-%04zu", (group * 7919) % 10000);
  return s + digits;
}

std::string word(Rng& rng) {
  const auto len = 3 + rng.below(6);
  std::string w;
  for (std::uint64_t i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.below(26)));
  return w;
}

const std::vector<std::string> kCategories{"alpha", "beta", "gamma", "delta", "epsilon", "zeta"};

}  // namespace

VendorDataset generate_desk_dataset(const DeskSpec& spec, std::uint64_t seed, Instant now) {
  if (spec.cols < 8) throw Error(ErrorCode::kInvalidArgument, "desk datasets need at least 8 columns");
  Rng rng(seed ^ name_hash(spec.name));
  const double accRate = 0.001 + 0.009 * rng.unit();
  const double misRate = 0.005 + 0.03 * rng.unit();
  const double expRate = 0.005 + 0.06 * rng.unit();
  const double fdRate = 0.002 + 0.01 * rng.unit();

  std::vector<Attribute> attrs{{"id", AttrType::kInteger, false},     {"code", AttrType::kText, false},
                               {"region", AttrType::kText, false},    {"category", AttrType::kText, false},
                               {"score", AttrType::kReal, false},     {"quantity", AttrType::kInteger, false},
                               {"updated", AttrType::kDate, true},    {"recorded", AttrType::kTimestamp, true}};
  QualityRuleSet rules;
  rules.requiredTypes["id"] = AttrType::kInteger;
  rules.patterns["code"] = "[A-Z]{3}-[0-9]{4}";
  std::vector<std::string> regions;
  for (int i = 1; i <= 10; ++i) regions.push_back((i < 10 ? "R0" : "R") + std::to_string(i));
  rules.domains["region"] = Domain{std::nullopt, std::nullopt, regions};
  rules.domains["category"] = Domain{std::nullopt, std::nullopt, kCategories};
  rules.domains["score"] = Domain{0.0, 100.0, {}};
  rules.domains["quantity"] = Domain{0.0, 500.0, {}};
  rules.expiry["updated"] = std::chrono::seconds(2 * kYearSeconds);
  rules.expiry["recorded"] = std::chrono::seconds(kYearSeconds);
  rules.necessaryAttrs = {"id", "code", "region", "category", "score"};
  rules.nMin = 1;
  rules.dependencies.push_back({{"code"}, "region", {}, std::nullopt});
  for (std::size_t c = 8; c < spec.cols; ++c) {
    switch ((c - 8) % 3) {
      case 0:
        attrs.push_back({"tag" + std::to_string(c), AttrType::kText, false});
        rules.patterns[attrs.back().name] = "[a-z]{3,8}";
        break;
      case 1:
        attrs.push_back({"num" + std::to_string(c), AttrType::kInteger, false});
        rules.domains[attrs.back().name] = Domain{0.0, 9999.0, {}};
        break;
      default:
        attrs.push_back({"val" + std::to_string(c), AttrType::kReal, false});
        rules.domains[attrs.back().name] = Domain{-1000.0, 1000.0, {}};
        break;
    }
  }

  Relation rel(spec.name, attrs);
  const std::size_t groups = (spec.rows + 3) / 4;
  std::vector<std::string> groupRegion(groups);
  for (auto& r : groupRegion) r = regions[rng.below(regions.size())];
  std::vector<std::size_t> conflicted(groups, spec.rows);  // row index that breaks the FD in its group
  for (std::size_t g = 0; g < groups; ++g)
    if (rng.unit() < fdRate) conflicted[g] = g * 4 + rng.below(std::min<std::size_t>(4, spec.rows - g * 4));

  const auto nowDay = std::chrono::floor<std::chrono::days>(now);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    const std::size_t g = r / 4;
    std::vector<std::optional<std::string>> row(attrs.size());
    row[0] = std::to_string(r + 1);
    row[1] = code_for(g);
    row[2] = groupRegion[g];
    if (conflicted[g] == r) {
      std::string other = groupRegion[g];
      while (other == groupRegion[g]) other = regions[rng.below(regions.size())];
      row[2] = other;
    }
    const bool bad = rng.unit() < accRate;
    row[3] = bad ? std::string("unknown") : kCategories[rng.below(kCategories.size())];
    row[4] = rng.unit() < accRate ? fixed2(100.0 + 50.0 * rng.unit()) : fixed2(100.0 * rng.unit());
    row[5] = rng.unit() < accRate ? std::to_string(-1 - rng.between(0, 49)) : std::to_string(rng.between(0, 500));
    const bool staleDay = rng.unit() < expRate;
    const auto ageDays = staleDay ? rng.between(732, 1800) : rng.between(0, 700);
    row[6] = format_date(nowDay - std::chrono::days(ageDays));
    const bool staleTs = rng.unit() < expRate;
    const auto ageSecs = staleTs ? rng.between(kYearSeconds + kDaySeconds, 3 * kYearSeconds)
                                 : rng.between(0, kYearSeconds - kDaySeconds);
    row[7] = format_instant(now - std::chrono::seconds(ageSecs));
    for (std::size_t c = 8; c < attrs.size(); ++c) {
      const bool wrong = rng.unit() < accRate;
      switch ((c - 8) % 3) {
        case 0: row[c] = wrong ? std::string("X9") : word(rng); break;
        case 1: row[c] = std::to_string(wrong ? 10000 + rng.between(0, 999) : rng.between(0, 9999)); break;
        default: row[c] = fixed2(wrong ? 5000.0 : -1000.0 + 2000.0 * rng.unit()); break;
      }
    }
    for (std::size_t c = 1; c < attrs.size(); ++c)
      if (rng.unit() < misRate) row[c] = std::nullopt;
    rel.append(row);
  }

  // The first query is selective (about 1/60 of rows) and projected, so that
  // purchases stay small; its fee targets a base price near 120.
  const double expected = std::max(1.0, static_cast<double>(spec.rows) / 60.0);
  PricePoint price{spec.name, std::max(0.01, std::round(120.0 / expected * 100.0) / 100.0), 5.0};
  const std::string n = spec.name;
  std::vector<SelectionQuery> queries{
      parse_query(n + ":category=beta,region=R03|id,code,score"),
      parse_query(n + ":score>=50,quantity<100"),
      parse_query(n + ":code~AB"),
      parse_query(n + ":updated>=" + format_date(nowDay - std::chrono::days(365))),
      parse_query(n),
  };
  return {std::move(rel), std::move(rules), price, std::move(queries)};
}

MarketSetup desk_setup(double scale, std::uint64_t seed) {
  MarketSetup s;
  const auto now = desk_now();
  for (const auto& spec : desk_specs(scale)) s.datasets.push_back(generate_desk_dataset(spec, seed, now));
  s.deriveStandard = true;
  s.group = GroupParams::test();
  s.now = now;
  s.seed = seed;
  return s;
}

void write_market(const MarketSetup& setup, const std::filesystem::path& dir, const std::string& groupProfile) {
  std::filesystem::create_directories(dir);
  MarketConfig c;
  c.params = setup.params;
  c.deriveStandard = setup.deriveStandard;
  c.costModel = setup.costModel;
  c.groupProfile = groupProfile;
  c.seed = setup.seed;
  c.protocol = setup.protocol;
  c.now = setup.now;
  for (const auto& d : setup.datasets) {
    const std::string file = d.relation.name() + ".csv";
    write_csv(dir / file, d.relation);
    DatasetConfig dc;
    dc.name = d.relation.name();
    dc.csv = file;
    dc.schema = d.relation.attributes();
    dc.rules = d.rules;
    dc.price = d.price;
    for (const auto& q : d.queries) dc.queries.push_back(format_query(q));
    c.datasets.push_back(std::move(dc));
  }
  std::ofstream out(dir / "config.json");
  if (!out) throw Error(ErrorCode::kIOFailure, "cannot write " + (dir / "config.json").string());
  out << market_config_to_json(c).dump(2) << '\n';
}

// ---------------------------------------------------------------- mistakes

const char* to_string(Corruption c) noexcept {
  switch (c) {
    case Corruption::kPatternBreak: return "patternBreak";
    case Corruption::kBlank: return "blank";
    case Corruption::kAge: return "age";
    case Corruption::kFdConflict: return "fdConflict";
  }
  return "unknown";
}

MistakeInjector::MistakeInjector(Relation& rel, const QualityRuleSet& rules, Instant now, Rng& rng)
    : rel_(rel), rules_(rules), now_(now), rng_(rng), checker_(rel, rules),
      dependencyCol_(rel.arity(), false), timestampCol_(rel.arity(), false) {
  for (const auto& d : rules.dependencies) {
    for (const auto& a : d.lhs)
      if (auto i = rel.index_of(a)) dependencyCol_[*i] = true;
    if (auto i = rel.index_of(d.rhs)) dependencyCol_[*i] = true;
    for (const auto& [a, v] : d.condition)
      if (auto i = rel.index_of(a)) dependencyCol_[*i] = true;
  }
  for (auto c : rel.timestamp_columns()) timestampCol_[c] = true;
}

bool MistakeInjector::accurate(std::size_t row, std::size_t col) const {
  const auto& cell = rel_.cell(row, col);
  return cell && !checker_.inaccurate(col, *cell);
}

std::vector<std::pair<std::size_t, std::size_t>> MistakeInjector::candidates(const std::vector<std::size_t>& cols,
                                                                            bool needTimestamp) const {
  auto eligible = [&](std::size_t r, std::size_t c) {
    if (!accurate(r, c)) return false;
    if (!needTimestamp) return true;
    const auto& cell = *rel_.cell(r, c);
    return cell.conforms() && !checker_.expired(c, cell, now_);
  };
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (cols.empty() || rel_.cardinality() == 0) return out;
  // Random probes find a cell quickly while most cells are clean; the full
  // scan only runs once eligible cells become rare.
  for (int probe = 0; probe < 64 && out.size() < 8; ++probe) {
    const auto r = rng_.below(rel_.cardinality());
    const auto c = cols[rng_.below(cols.size())];
    if (eligible(r, c) && std::find(out.begin(), out.end(), std::make_pair(r, c)) == out.end()) out.emplace_back(r, c);
  }
  if (!out.empty()) return out;
  for (std::size_t r = 0; r < rel_.cardinality(); ++r)
    for (auto c : cols)
      if (eligible(r, c)) out.emplace_back(r, c);
  return out;
}

bool MistakeInjector::pattern_break() {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < rel_.arity(); ++c) {
    if (dependencyCol_[c] || timestampCol_[c]) continue;
    const auto& name = rel_.attributes()[c].name;
    const bool ruled = rules_.patterns.count(name) || rules_.domains.count(name) || rules_.requiredTypes.count(name) ||
                       rel_.attributes()[c].type != AttrType::kText;
    if (ruled) cols.push_back(c);
  }
  auto pool = candidates(cols, false);
  while (!pool.empty()) {
    const auto pick = rng_.below(pool.size());
    const auto [r, c] = pool[pick];
    for (const char* text : {"#ERR", "-99999", "zz", "99999999"}) {
      if (checker_.inaccurate(c, Cell(text, rel_.attributes()[c].type))) {
        rel_.set_cell(r, c, std::string(text));
        return true;
      }
    }
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return false;
}

bool MistakeInjector::blank() {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < rel_.arity(); ++c)
    if (!dependencyCol_[c] && !timestampCol_[c]) cols.push_back(c);
  auto pool = candidates(cols, false);
  if (pool.empty()) return false;
  const auto [r, c] = pool[rng_.below(pool.size())];
  rel_.set_cell(r, c, std::nullopt);
  return true;
}

bool MistakeInjector::age() {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < rel_.arity(); ++c)
    if (timestampCol_[c] && !dependencyCol_[c] && rules_.expiry.count(rel_.attributes()[c].name)) cols.push_back(c);
  auto pool = candidates(cols, true);
  while (!pool.empty()) {
    const auto pick = rng_.below(pool.size());
    const auto [r, c] = pool[pick];
    const auto& attr = rel_.attributes()[c];
    const auto expiry = rules_.expiry.at(attr.name);
    const Instant t = now_ - expiry - std::chrono::days(1 + rng_.between(0, 365));
    const std::string text = attr.type == AttrType::kTimestamp
                                 ? format_instant(t)
                                 : format_date(std::chrono::floor<std::chrono::days>(t));
    const Cell aged(text, attr.type);
    if (!checker_.inaccurate(c, aged) && checker_.expired(c, aged, now_)) {
      rel_.set_cell(r, c, text);
      return true;
    }
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return false;
}

void MistakeInjector::prepare_fd() {
  fdReady_ = true;
  std::vector<bool> keyCol(rel_.arity(), false);
  std::vector<std::size_t> uses(rel_.arity(), 0);
  for (const auto& d : rules_.dependencies) {
    for (const auto& a : d.lhs)
      if (auto i = rel_.index_of(a)) keyCol[*i] = true, ++uses[*i];
    for (const auto& [a, v] : d.condition)
      if (auto i = rel_.index_of(a)) keyCol[*i] = true, ++uses[*i];
    if (auto i = rel_.index_of(d.rhs)) ++uses[*i];
  }
  for (std::size_t di = 0; di < rules_.dependencies.size(); ++di) {
    const auto& d = rules_.dependencies[di];
    if (!d.condition.empty() || d.rhsConstant) continue;
    const auto rhs = rel_.index_of(d.rhs);
    if (!rhs || keyCol[*rhs] || timestampCol_[*rhs]) continue;
    std::vector<std::size_t> lhs;
    for (const auto& a : d.lhs) lhs.push_back(rel_.require_index(a));

    std::map<std::string, std::vector<std::size_t>> byKey;
    for (std::size_t r = 0; r < rel_.cardinality(); ++r) {
      std::string key;
      bool complete = true;
      for (auto c : lhs) {
        const auto& cell = rel_.cell(r, c);
        if (!cell) {
          complete = false;
          break;
        }
        key += cell->text();
        key.push_back('\x1f');
      }
      if (complete) byKey[key].push_back(r);
    }
    FdGroups g;
    g.dependency = di;
    g.rhs = *rhs;
    g.shared = uses[*rhs] > 1;
    for (auto& [key, members] : byKey)
      if (members.size() >= 2) g.groups.push_back(std::move(members));
    fds_.push_back(std::move(g));
  }
  violating_.assign(rel_.cardinality(), 0);
  for (auto r : violating_rows(rel_, rules_)) violating_[r] = 1;
}

bool MistakeInjector::fd_conflict() {
  if (!fdReady_) prepare_fd();
  for (const auto& fd : fds_) {
    if (fd.groups.empty()) continue;
    const auto rhs = fd.rhs;
    // Rows whose whole group is clean and agrees can take a conflicting value.
    auto clean_group = [&](const std::vector<std::size_t>& members) {
      for (auto r : members)
        if (violating_[r] || !accurate(r, rhs)) return false;
      return true;
    };
    std::optional<std::size_t> group;
    for (int probe = 0; probe < 64 && !group; ++probe) {
      const auto gi = rng_.below(fd.groups.size());
      if (clean_group(fd.groups[gi])) group = gi;
    }
    if (!group) {
      for (std::size_t gi = 0; gi < fd.groups.size() && !group; ++gi)
        if (clean_group(fd.groups[gi])) group = gi;
    }
    if (!group) continue;
    const auto& members = fd.groups[*group];
    const auto row = members[rng_.below(members.size())];
    const Cell current = *rel_.cell(row, rhs);
    auto donate = [&](std::size_t r) {
      if (!accurate(r, rhs) || *rel_.cell(r, rhs) == current) return false;
      rel_.set_cell(row, rhs, rel_.cell(r, rhs)->text());
      return true;
    };
    bool done = false;
    for (int probe = 0; probe < 64 && !done; ++probe) done = donate(rng_.below(rel_.cardinality()));
    for (std::size_t r = 0; r < rel_.cardinality() && !done; ++r) done = donate(r);
    if (!done) continue;
    if (fd.shared) {
      violating_.assign(rel_.cardinality(), 0);
      for (auto r : violating_rows(rel_, rules_)) violating_[r] = 1;
    } else {
      for (auto r : members) violating_[r] = 1;
    }
    return true;
  }
  return false;
}

bool MistakeInjector::inject(Corruption kind) {
  switch (kind) {
    case Corruption::kPatternBreak: return pattern_break();
    case Corruption::kBlank: return blank();
    case Corruption::kAge: return age();
    case Corruption::kFdConflict: return fd_conflict();
  }
  return false;
}

std::optional<Corruption> MistakeInjector::inject_next() {
  static constexpr std::array<Corruption, 4> kOrder{Corruption::kPatternBreak, Corruption::kBlank, Corruption::kAge,
                                                    Corruption::kFdConflict};
  for (int attempt = 0; attempt < 4; ++attempt) {
    const auto kind = kOrder[cursor_++ % kOrder.size()];
    if (inject(kind)) return kind;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- stats

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(s.n);
  double m2 = 0.0, m3 = 0.0;
  for (double x : xs) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  if (s.n > 1) s.variance = m2 / static_cast<double>(s.n - 1);
  const double pm2 = m2 / static_cast<double>(s.n);
  const double pm3 = m3 / static_cast<double>(s.n);
  if (pm2 > 0.0) s.skewness = pm3 / std::pow(pm2, 1.5);
  return s;
}

Histogram histogram(const std::vector<double>& xs, std::size_t bins) {
  Histogram h;
  if (xs.empty() || bins == 0) return h;
  const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
  h.lo = *mn;
  h.hi = *mx;
  if (h.hi == h.lo) {
    h.counts = {xs.size()};
    return h;
  }
  h.counts.assign(bins, 0);
  const double width = (h.hi - h.lo) / static_cast<double>(bins);
  for (double x : xs) {
    auto b = static_cast<std::size_t>((x - h.lo) / width);
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

WelchResult welch_test(const std::vector<double>& a, const std::vector<double>& b) {
  const auto sa = summarize(a), sb = summarize(b);
  if (sa.n < 2 || sb.n < 2) throw Error(ErrorCode::kInvalidArgument, "Welch's test needs two samples per arm");
  const double va = sa.variance / static_cast<double>(sa.n);
  const double vb = sb.variance / static_cast<double>(sb.n);
  WelchResult r;
  const double diff = sa.mean - sb.mean;
  if (va + vb == 0.0) {
    r.t = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    r.df = static_cast<double>(sa.n + sb.n - 2);
    r.p = diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = diff / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(sa.n - 1) + vb * vb / static_cast<double>(sb.n - 1));
  boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

// ---------------------------------------------------------------- reports

json environment_stamp() {
  json j;
#if defined(__VERSION__)
  j["compiler"] = __VERSION__;
#endif
  j["cplusplus"] = __cplusplus;
  j["gmp"] = gmp_version;
  j["hardwareThreads"] = std::thread::hardware_concurrency();
  return j;
}

json to_json(const ExperimentReport& r, bool includeTimings) {
  json j;
  j["experiment"] = r.experiment;
  j["seed"] = r.seed;
  if (!r.timing.empty()) {
    json rows = json::array();
    for (const auto& t : r.timing) {
      json row{{"dataset", t.name}, {"rows", t.rows}, {"columns", t.columns}, {"queries", t.queries}};
      if (includeTimings) {
        row["avgPreprocessSeconds"] = t.avgPreprocessSeconds;
        if (t.avgQuerySeconds) row["avgQuerySeconds"] = *t.avgQuerySeconds;
      }
      rows.push_back(row);
    }
    j["timing"] = rows;
  }
  if (!r.distribution.empty()) {
    json rows = json::array();
    for (const auto& d : r.distribution) {
      rows.push_back({{"dataset", d.name},
                      {"query", d.query},
                      {"basePrice", d.basePrice},
                      {"samples", d.samples},
                      {"histogram", {{"lo", d.histogram.lo}, {"hi", d.histogram.hi}, {"counts", d.histogram.counts}}},
                      {"mean", d.summary.mean},
                      {"variance", d.summary.variance},
                      {"skewness", d.summary.skewness}});
    }
    j["distribution"] = rows;
  }
  if (!r.mistakes.empty()) {
    json rows = json::array();
    for (const auto& m : r.mistakes) {
      rows.push_back({{"dataset", m.name},
                      {"query", m.query},
                      {"weights", m.weights},
                      {"corruptedCells", m.corruptedCells},
                      {"k", m.k},
                      {"prices", m.prices},
                      {"nonIncreasing", m.nonIncreasing}});
    }
    j["mistakes"] = rows;
  }
  if (r.cheat) {
    const auto& c = *r.cheat;
    j["cheat"] = {{"trials", c.trials},
                  {"leak", c.leak},
                  {"informedMeanDeviation", c.informedMean},
                  {"randomMeanDeviation", c.randomMean},
                  {"welchT", c.test.t},
                  {"welchDf", c.test.df},
                  {"welchP", c.test.p},
                  {"purchases", c.purchases}};
    json trials = json::array();
    for (const auto& t : r.cheatTrials) {
      trials.push_back({{"dataset", t.dataset},
                        {"trueWeights", t.trueWeights},
                        {"informedWeights", t.informedWeights},
                        {"randomWeights", t.randomWeights},
                        {"basePrice", t.basePrice},
                        {"truePrice", t.truePrice},
                        {"informedPrice", t.informedPrice},
                        {"randomPrice", t.randomPrice},
                        {"informedDeviation", t.informedDeviation},
                        {"randomDeviation", t.randomDeviation}});
    }
    j["cheatTrials"] = trials;
  }
  if (r.audit) {
    const auto& a = *r.audit;
    j["audit"] = {{"messages", a.messages},
                  {"leaks", a.leaks},
                  {"records", a.records},
                  {"verifyPassed", a.verifyPassed},
                  {"checkBalancePassed", a.checkBalancePassed},
                  {"liveChecks", a.liveChecks},
                  {"liveChecksPassed", a.liveChecksPassed},
                  {"clean", a.clean()}};
  }
  if (includeTimings) j["environment"] = r.environment;
  return j;
}

std::string histogram_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "dataset,bin_lo,bin_hi,count\n";
  for (const auto& d : r.distribution) {
    const auto& h = d.histogram;
    const double width = h.counts.size() > 1 ? (h.hi - h.lo) / static_cast<double>(h.counts.size()) : 0.0;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      const double lo = h.lo + width * static_cast<double>(i);
      const double hi = h.counts.size() > 1 ? lo + width : h.hi;
      out << d.name << ',' << lo << ',' << hi << ',' << h.counts[i] << '\n';
    }
  }
  return out.str();
}

// ---------------------------------------------------------------- experiments

TranscriptAudit audit_market(Marketplace& market) {
  TranscriptAudit a;
  const auto& group = market.group();
  std::map<std::uint64_t, const Receipt*> receipts;
  for (auto* b : market.buyers())
    for (const auto& r : b->receipts()) receipts[r.consumptionId] = &r;

  for (const auto& rec : market.mms().records()) {
    ++a.records;
    auto it = receipts.find(rec.consumptionId);
    const bool buyerYes = it != receipts.end() && it->second->price == rec.priceCipher &&
                          verify_consumption(it->second->before, it->second->price, it->second->after, group) ==
                              Verdict::kYes;
    const bool recordYes =
        verify_consumption(rec.preBalanceCipher, rec.priceCipher, rec.postBalanceCipher, group) == Verdict::kYes;
    if (buyerYes && recordYes) ++a.verifyPassed;
    const auto tracked = market.ttp().balance_after(rec.consumptionId);
    if (tracked && *tracked == rec.postBalanceCipher) ++a.checkBalancePassed;
  }
  // Each buyer also asks the TTP about its latest balance over the channel.
  for (auto* b : market.buyers()) {
    if (!b->userId() || !b->lastBalance()) continue;
    ++a.liveChecks;
    if (market.check_balance(*b, *b->lastBalance()) == Verdict::kYes) ++a.liveChecksPassed;
  }
  a.messages = market.bus().transcript().size();
  a.leaks = scan_buyer_bound(market.bus().transcript()).size();
  return a;
}

ExperimentReport run_timing(const MarketSetup& setup, std::size_t repeats) {
  ExperimentReport report;
  report.experiment = "timing";
  report.seed = setup.seed;
  report.environment = environment_stamp();
  repeats = std::max<std::size_t>(1, repeats);
  // Sequential on purpose: concurrent runs would distort each other's timings.
  for (const auto& d : setup.datasets) {
    DatasetTiming t;
    t.name = d.relation.name();
    t.rows = d.relation.cardinality();
    t.columns = d.relation.arity();
    auto start = Clock::now();
    for (std::size_t i = 0; i < repeats; ++i) assess_all(d.relation, d.rules, setup.now, setup.params.kmax);
    t.avgPreprocessSeconds = seconds_since(start) / static_cast<double>(repeats);
    t.queries = d.queries.size();
    if (!d.queries.empty()) {
      start = Clock::now();
      for (std::size_t i = 0; i < repeats; ++i)
        for (const auto& q : d.queries) run_query(d.relation, q);
      t.avgQuerySeconds = seconds_since(start) / static_cast<double>(repeats * d.queries.size());
    }
    report.timing.push_back(t);
  }
  return report;
}

namespace {

SelectionQuery first_query(const VendorDataset& d) {
  return d.queries.empty() ? SelectionQuery{d.relation.name(), {}, std::nullopt} : d.queries.front();
}

double major(std::int64_t minor, std::int64_t scale) {
  return static_cast<double>(minor) / static_cast<double>(scale);
}

}  // namespace

ExperimentReport run_distribution(const MarketSetup& setup, std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw Error(ErrorCode::kInvalidArgument, "trials must be at least 1");
  ExperimentReport report;
  report.experiment = "distribution";
  report.seed = seed;
  report.environment = environment_stamp();
  Marketplace market(setup);
  auto& buyer = market.add_buyer("analyst");
  const auto scale = setup.protocol.moneyScale;
  Rng master(seed);
  for (const auto& d : market.mms().setup().datasets) {
    Rng rng = master.fork();
    const SelectionQuery q = first_query(d);
    const std::string text = format_query(q);
    PriceDistribution dist;
    dist.name = d.relation.name();
    dist.query = text;
    for (std::size_t t = 0; t < trials; ++t) {
      const WeightVector w(rng.simplex4());
      const auto quote = market.request_quote(buyer, text, w);
      market.decline(buyer, quote);
      const auto p = market.mms().price(q, w);
      dist.basePrice = p.breakdown.basePrice;
      dist.samples.push_back(major(p.breakdown.minor, scale));
    }
    dist.histogram = histogram(dist.samples);
    dist.summary = summarize(dist.samples);
    report.distribution.push_back(std::move(dist));
  }
  report.audit = audit_market(market);
  report.transcript = market.bus().transcript_jsonl();
  return report;
}

ExperimentReport run_mistakes(const MarketSetup& setup, std::size_t steps, std::size_t cellsPerStep,
                              std::uint64_t seed) {
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "steps must be at least 1");
  if (setup.datasets.empty()) throw Error(ErrorCode::kSetupError, "no datasets");
  ExperimentReport report;
  report.experiment = "mistakes";
  report.seed = seed;
  report.environment = environment_stamp();

  // The market standard and base prices are fixed before any corruption so
  // that only the corrupted instance's own quality moves its price.
  MarketParams params = setup.params;
  if (setup.deriveStandard) {
    std::vector<QualityProfile> initial;
    for (const auto& d : setup.datasets) initial.push_back(assess_all(d.relation, d.rules, setup.now, params.kmax));
    params.standard = compute_market_baseline(initial);
  }
  Rng master(seed);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < setup.datasets.size(); ++i) seeds.push_back(master.next());

  auto one = [&](std::size_t i) {
    const auto& d = setup.datasets[i];
    Rng rng(seeds[i]);
    Relation rel = d.relation;
    MistakeCurve curve;
    curve.name = rel.name();
    const SelectionQuery q = first_query(d);
    curve.query = format_query(q);
    const WeightVector w(rng.simplex4());
    curve.weights = w.values();
    const double base = base_price(d.price, run_query(rel, q).size());
    MistakeInjector injector(rel, d.rules, setup.now, rng);
    std::size_t corrupted = 0;
    std::int64_t last = 0;
    for (std::size_t s = 0; s <= steps; ++s) {
      if (s > 0)
        for (std::size_t c = 0; c < cellsPerStep; ++c)
          if (injector.inject_next()) ++corrupted;
      const auto profile = assess_all(rel, d.rules, setup.now, params.kmax);
      const auto p = quality_price(base, profile, w, params, setup.costModel, setup.protocol.moneyScale);
      if (s > 0 && p.minor > last) curve.nonIncreasing = false;
      last = p.minor;
      curve.corruptedCells.push_back(corrupted);
      curve.k.push_back(profile.k);
      curve.prices.push_back(major(p.minor, setup.protocol.moneyScale));
    }
    return curve;
  };
  std::vector<std::future<MistakeCurve>> jobs;
  for (std::size_t i = 0; i < setup.datasets.size(); ++i) jobs.push_back(std::async(std::launch::async, one, i));
  for (auto& j : jobs) report.mistakes.push_back(j.get());
  return report;
}

namespace {

std::array<double, 4> emphasize(const std::array<double, 4>& w, std::size_t j) {
  std::array<double, 4> out{};
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = 0.5 * w[i] + (i == j ? 0.5 : 0.0);
    sum += out[i];
  }
  for (auto& x : out) x /= sum;
  return out;
}

/// Largest draw goes to the first aspect in `order`, and so on down.
std::array<double, 4> assign_sorted(std::array<double, 4> draw, const std::array<std::size_t, 4>& order) {
  std::sort(draw.begin(), draw.end(), std::greater<>());
  std::array<double, 4> w{};
  for (std::size_t k = 0; k < 4; ++k) w[order[k]] = draw[k];
  return w;
}

std::array<std::size_t, 4> random_order(Rng& rng) {
  std::array<std::size_t, 4> idx{0, 1, 2, 3};
  for (std::size_t i = 4; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

}  // namespace

ExperimentReport run_cheat(const MarketSetup& setup, std::size_t trials, std::uint64_t seed, CheatOptions options) {
  ExperimentReport report;
  report.experiment = "cheat";
  report.seed = seed;
  report.environment = environment_stamp();
  if (trials == 0) return report;

  MarketSetup s = setup;
  s.protocol.debugLeakPrices = options.leak;
  Marketplace market(std::move(s));
  auto& adversary = market.add_buyer("adversary");
  const auto scale = market.mms().setup().protocol.moneyScale;
  const auto& datasets = market.mms().setup().datasets;
  Rng rng(seed);
  CheatSummary summary;
  summary.trials = trials;
  summary.leak = options.leak;
  bool funded = false;
  std::vector<double> informed, random;

  for (std::size_t t = 0; t < trials; ++t) {
    const auto& d = datasets[t % datasets.size()];
    const SelectionQuery q = first_query(d);
    const std::string text = format_query(q);
    const WeightVector w(rng.simplex4());

    // Probe quotes claiming a need for each aspect in turn. Without the leak
    // the only comparable number is the range width.
    std::array<double, 4> score{};
    for (std::size_t j = 0; j < 4; ++j) {
      const auto quote = market.request_quote(adversary, text, WeightVector(emphasize(w.values(), j)));
      score[j] = quote.leakedPrice ? *quote.leakedPrice
                                    : static_cast<double>(std::llround(quote.width() * static_cast<double>(scale)));
      market.decline(adversary, quote);
    }
    auto order = random_order(rng);  // ties stay in random order
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    const WeightVector wInformed(assign_sorted(rng.simplex4(), order));
    const WeightVector wRandom(rng.simplex4());

    const auto pTrue = market.mms().price(q, w).breakdown;
    const auto pInformed = market.mms().price(q, wInformed).breakdown;
    const auto pRandom = market.mms().price(q, wRandom).breakdown;
    CheatTrial trial;
    trial.dataset = d.relation.name();
    trial.trueWeights = arr(w);
    trial.informedWeights = arr(wInformed);
    trial.randomWeights = arr(wRandom);
    trial.basePrice = pTrue.basePrice;
    trial.truePrice = major(pTrue.minor, scale);
    trial.informedPrice = major(pInformed.minor, scale);
    trial.randomPrice = major(pRandom.minor, scale);
    if (pTrue.basePrice > 0.0) {
      trial.informedDeviation = (trial.informedPrice - trial.truePrice) / pTrue.basePrice;
      trial.randomDeviation = (trial.randomPrice - trial.truePrice) / pTrue.basePrice;
    }
    informed.push_back(trial.informedDeviation);
    random.push_back(trial.randomDeviation);
    report.cheatTrials.push_back(trial);

    if (options.purchaseEvery > 0 && t % options.purchaseEvery == 0) {
      if (!funded) {
        market.recharge(adversary, 1'000'000.0);
        funded = true;
      }
      const auto quote = market.request_quote(adversary, text, wInformed);
      market.agree(adversary, quote);
      ++summary.purchases;
    }
  }
  summary.informedMean = summarize(informed).mean;
  summary.randomMean = summarize(random).mean;
  if (trials >= 2) summary.test = welch_test(informed, random);
  report.cheat = summary;
  report.audit = audit_market(market);
  report.transcript = market.bus().transcript_jsonl();
  return report;
}

double cheat_null_threshold(const MarketSetup& setup, std::size_t trials, std::size_t replicas, double alpha,
                            std::uint64_t seed) {
  if (trials == 0 || replicas == 0) throw Error(ErrorCode::kInvalidArgument, "need trials and replicas");
  const MarketManager mms(setup);
  const auto& datasets = mms.setup().datasets;
  Rng rng(seed);
  std::vector<double> stats;
  stats.reserve(replicas);
  for (std::size_t r = 0; r < replicas; ++r) {
    double sumA = 0.0, sumB = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto& d = datasets[t % datasets.size()];
      const SelectionQuery q = first_query(d);
      const WeightVector w(rng.simplex4());
      const auto p = mms.price(q, w).breakdown;
      if (p.basePrice <= 0.0) continue;
      const auto pa = mms.price(q, WeightVector(rng.simplex4())).breakdown;
      const auto pb = mms.price(q, WeightVector(rng.simplex4())).breakdown;
      sumA += static_cast<double>(pa.minor - p.minor) / static_cast<double>(mms.setup().protocol.moneyScale) / p.basePrice;
      sumB += static_cast<double>(pb.minor - p.minor) / static_cast<double>(mms.setup().protocol.moneyScale) / p.basePrice;
    }
    stats.push_back(std::abs(sumA - sumB) / static_cast<double>(trials));
  }
  std::sort(stats.begin(), stats.end());
  const auto idx = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(replicas))) - 1;
  return stats[std::min(idx, stats.size() - 1)];
}

bool DemoResult::ok() const {
  return audit.clean() && std::all_of(checks.begin(), checks.end(), [](const DemoCheck& c) { return c.pass; });
}

namespace {

std::string range_text(const PriceRange& r) {
  std::ostringstream s;
  s << '[' << r.lo << ',' << r.hi << ']';
  return s.str();
}

}  // namespace

DemoResult run_protocol_demo(const MarketSetup& setup) {
  if (setup.group.profile != "toy") throw Error(ErrorCode::kInvalidConfig, "the demo runs on the toy group");
  DemoResult out;
  auto check = [&](std::string name, std::string expected, std::string actual) {
    const bool pass = expected == actual;
    out.checks.push_back({std::move(name), std::move(expected), std::move(actual), pass});
  };
  Marketplace market(setup);
  const auto& group = market.group();
  const std::string query = "university:Country=US";
  const auto w = WeightVector::uniform();

  // Alice: register, recharge, quote, buy, verify.
  auto& alice = market.add_buyer("alice");
  check("alice user id", "1", std::to_string(alice.userId().value_or(0)));
  check("alice generator", "3", to_hex(market.mms().credential(1).generator));
  check("fresh balance cipher", "1", market.request_balance(alice).hex());
  market.recharge(alice, 4);
  const auto eb1 = market.request_balance(alice);
  check("E_B1", "1", eb1.hex());
  const auto quote = market.request_quote(alice, query, w);
  check("alice quoted range", "[1,4]", range_text(quote.range));
  check("quoted range contains 3", "true", quote.range.contains(3.0) ? "true" : "false");
  check("E_p", "2", quote.priceCipher.hex());
  const auto purchase = market.agree(alice, quote);
  check("alice consumption id", "1", std::to_string(purchase.receipt.consumptionId));
  check("rows returned", "2", std::to_string(purchase.rows.size()));
  check("E_B2", "3", purchase.receipt.after.hex());
  check("inverse of E_B2", "2", inv(purchase.receipt.after, group).hex());
  check("buyer Verify", "YES", to_string(alice.verify(purchase.receipt, group)));
  check("Verify with tampered E_B2=4", "NO",
        to_string(verify_consumption(purchase.receipt.before, purchase.receipt.price, EncryptedAmount{4}, group)));
  check("checkBalance(E_B2)", "YES", to_string(market.check_balance(alice, purchase.receipt.after)));
  check("checkBalance(stale E_B1)", "NO", to_string(market.check_balance(alice, eb1)));
  check("VerifyRange on the archived range", "YES",
        to_string(market.verify_range(alice, 1, quote.range, quote.priceCipher)));

  // Bob buys the same data, then tries to narrow his range.
  auto& bob = market.add_buyer("bob");
  check("bob user id", "2", std::to_string(bob.userId().value_or(0)));
  market.recharge(bob, 5);
  const auto bobQuote = market.request_quote(bob, query, w);
  const auto bobBuy = market.agree(bob, bobQuote);
  check("bob consumption id", "2", std::to_string(bobBuy.receipt.consumptionId));
  check("bob quoted range", "[1,4]", range_text(bobQuote.range));
  check("bob Verify", "YES", to_string(bob.verify(bobBuy.receipt, group)));
  check("bob probe [2.5,4]", "REJECTED",
        to_string(market.verify_range(bob, 2, PriceRange{2.5, 4.0}, bobQuote.priceCipher)));
  std::size_t answered = 0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      PriceRange probe{1.0 + 0.15 * i, 4.0 - 0.15 * j};
      if (i == 0 && j == 0) probe.hi = 3.99;
      if (market.verify_range(bob, 2, probe, bobQuote.priceCipher) != RangeVerdict::kRejected) ++answered;
    }
  }
  check("answered narrowing probes", "0", std::to_string(answered));
  check("bob asking about alice's record", "REJECTED",
        to_string(market.verify_range(bob, 1, quote.range, quote.priceCipher)));

  // A declined quote leaves the balance alone.
  const auto before = market.request_balance(alice);
  market.recharge(alice, 3);
  const auto funded = market.request_balance(alice);
  const auto again = market.request_quote(alice, query, w);
  market.decline(alice, again);
  check("balance after decline", funded.hex(), market.request_balance(alice).hex());
  check("recharge moved the balance", "true", before == funded ? "false" : "true");

  out.audit = audit_market(market);
  out.transcript = market.bus().transcript_jsonl();
  return out;
}

}  // namespace fairmarket
