#include "fairmarket/quality.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <regex>
#include <unordered_map>

#include "fairmarket/error.hpp"

namespace fairmarket {

const char* to_string(Aspect aspect) noexcept {
  switch (aspect) {
    case Aspect::kAccuracy: return "accuracy";
    case Aspect::kCompleteness: return "completeness";
    case Aspect::kTimeliness: return "timeliness";
    case Aspect::kConsistency: return "consistency";
  }
  return "?";
}

void QualityRuleSet::validate() const {
  double sum = 0.0;
  for (double w : completenessWeights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "completeness weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidConfig, "completeness weights must sum to 1");
  if (nMin < 1) throw Error(ErrorCode::kInvalidConfig, "nMin must be at least 1");
  for (const auto& [attr, pattern] : patterns) {
    try {
      std::regex re(pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::kInvalidConfig, "bad pattern for '" + attr + "': " + e.what());
    }
  }
  for (const auto& [attr, d] : expiry)
    if (d.count() < 0) throw Error(ErrorCode::kInvalidConfig, "negative expiry for '" + attr + "'");
  for (const auto& dep : dependencies)
    if (dep.lhs.empty() || dep.rhs.empty())
      throw Error(ErrorCode::kInvalidConfig, "dependency needs a non-empty LHS and an RHS");
}

double violation_score(double ratio, double kmax) {
  const double floor = std::pow(10.0, -kmax);
  const double clamped = std::clamp(ratio, floor, 1.0);
  if (clamped == floor) return kmax;
  const double k = -std::log10(clamped);
  return k == 0.0 ? 0.0 : k;  // no negative zero
}

std::size_t QualityProfile::violations(Aspect a) const {
  switch (a) {
    case Aspect::kAccuracy: return nAc;
    case Aspect::kCompleteness: return nMis;
    case Aspect::kTimeliness: return nExp;
    case Aspect::kConsistency: return nVio;
  }
  return 0;
}

struct CellChecker::Impl {
  struct Column {
    std::optional<std::regex> pattern;
    const Domain* domain = nullptr;
    std::optional<AttrType> requiredType;
    std::optional<std::chrono::seconds> expiry;
  };
  std::vector<Column> columns;
};

CellChecker::CellChecker(const Relation& rel, const QualityRuleSet& rules) : impl_(std::make_unique<Impl>()) {
  impl_->columns.resize(rel.arity());
  for (std::size_t c = 0; c < rel.arity(); ++c) {
    const auto& name = rel.attributes()[c].name;
    auto& col = impl_->columns[c];
    if (auto it = rules.patterns.find(name); it != rules.patterns.end()) {
      try {
        col.pattern.emplace(it->second, std::regex::ECMAScript | std::regex::optimize);
      } catch (const std::regex_error& e) {
        throw Error(ErrorCode::kInvalidConfig, "bad pattern for '" + name + "': " + e.what());
      }
    }
    if (auto it = rules.domains.find(name); it != rules.domains.end()) col.domain = &it->second;
    if (auto it = rules.requiredTypes.find(name); it != rules.requiredTypes.end()) col.requiredType = it->second;
    if (auto it = rules.expiry.find(name); it != rules.expiry.end()) col.expiry = it->second;
  }
}

CellChecker::~CellChecker() = default;
CellChecker::CellChecker(CellChecker&&) noexcept = default;
CellChecker& CellChecker::operator=(CellChecker&&) noexcept = default;

namespace {

bool outside_domain(const Domain& d, const Cell& cell) {
  if (!d.values.empty() &&
      std::find(d.values.begin(), d.values.end(), cell.text()) == d.values.end())
    return true;
  if (d.min || d.max) {
    auto v = cell.as_number();
    if (!v) {
      double parsed{};
      const auto& t = cell.text();
      auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), parsed);
      if (ec != std::errc{} || ptr != t.data() + t.size()) return true;
      v = parsed;
    }
    if (d.min && *v < *d.min) return true;
    if (d.max && *v > *d.max) return true;
  }
  return false;
}

}  // namespace

bool CellChecker::inaccurate(std::size_t col, const Cell& cell) const {
  const auto& rules = impl_->columns.at(col);
  if (!cell.conforms()) return true;
  if (rules.requiredType && !Cell(cell.text(), *rules.requiredType).conforms()) return true;
  if (rules.pattern && !std::regex_match(cell.text(), *rules.pattern)) return true;
  if (rules.domain && outside_domain(*rules.domain, cell)) return true;
  return false;
}

bool CellChecker::expired(std::size_t col, const Cell& cell, Instant now) const {
  const auto& rules = impl_->columns.at(col);
  if (!rules.expiry) return false;
  auto t = cell.as_instant();
  if (!t) return false;  // unparseable timestamps are an accuracy defect, not a timeliness one
  return now - *t > *rules.expiry;
}

namespace {

void require_rows(const Relation& rel) {
  if (rel.cardinality() == 0 || rel.arity() == 0)
    throw Error(ErrorCode::kEmptyRelation, "relation '" + rel.name() + "' has no cells to assess");
}

}  // namespace

AccuracyResult assess_accuracy(const Relation& rel, const QualityRuleSet& rules, double kmax) {
  require_rows(rel);
  CellChecker checker(rel, rules);
  AccuracyResult out;
  for (const auto& row : rel.rows())
    for (std::size_t c = 0; c < row.size(); ++c)
      if (row[c] && checker.inaccurate(c, *row[c])) ++out.nAc;
  out.rate = static_cast<double>(out.nAc) / static_cast<double>(rel.cell_total());
  out.k = violation_score(out.rate, kmax);
  return out;
}

CompletenessResult assess_completeness(const Relation& rel, const QualityRuleSet& rules, double kmax) {
  require_rows(rel);
  if (rules.necessaryAttrs.empty())
    throw Error(ErrorCode::kEmptyNecessarySet, "no necessary attributes configured for '" + rel.name() + "'");
  CompletenessResult out;
  for (const auto& row : rel.rows())
    for (const auto& cell : row)
      if (!cell) ++out.nMis;
  out.necessaryCount = rules.necessaryAttrs.size();
  for (const auto& a : rules.necessaryAttrs)
    if (rel.index_of(a)) ++out.coveredNecessary;

  const auto n = static_cast<double>(rel.cardinality());
  const auto p = static_cast<double>(out.necessaryCount);
  const auto& w = rules.completenessWeights;
  const double amount = std::floor(static_cast<double>(rules.nMin) / n);
  const double attrs = (p - static_cast<double>(out.coveredNecessary)) / p;
  const double missing = static_cast<double>(out.nMis) / static_cast<double>(rel.cell_total());
  out.inner = w[0] * amount + w[1] * attrs + w[2] * missing;
  out.k = violation_score(out.inner, kmax);
  return out;
}

TimelinessResult assess_timeliness(const Relation& rel, const QualityRuleSet& rules, Instant now, double kmax) {
  require_rows(rel);
  TimelinessResult out;
  const auto cols = rel.timestamp_columns();
  out.timestampAttrCount = cols.size();
  if (cols.empty()) {
    out.k = kmax;
    return out;
  }
  for (auto c : cols)
    if (!rules.expiry.count(rel.attributes()[c].name))
      throw Error(ErrorCode::kInvalidConfig, "timestamp attribute '" + rel.attributes()[c].name + "' has no expiry");
  CellChecker checker(rel, rules);
  for (const auto& row : rel.rows())
    for (auto c : cols)
      if (row[c] && checker.expired(c, *row[c], now)) ++out.nExp;
  out.rate = static_cast<double>(out.nExp) / static_cast<double>(cols.size() * rel.cardinality());
  out.k = violation_score(out.rate, kmax);
  return out;
}

namespace {

void append_key(std::string& key, const Cell& cell) {
  char buf[40];
  std::string part;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          part = "s" + cell.text();
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          part = "i" + std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          std::snprintf(buf, sizeof buf, "d%.17g", v == 0.0 ? 0.0 : v);
          part = buf;
        } else if constexpr (std::is_same_v<T, Days>) {
          part = "D" + std::to_string(v.time_since_epoch().count());
        } else {
          part = "t" + std::to_string(v.time_since_epoch().count());
        }
      },
      cell.typed());
  key += std::to_string(part.size());
  key += ':';
  key += part;
}

struct BoundDependency {
  std::vector<std::size_t> lhs;
  std::size_t rhs;
  std::vector<std::pair<std::size_t, Cell>> condition;
  std::optional<Cell> rhsConstant;
};

BoundDependency bind(const Relation& rel, const Dependency& dep) {
  auto idx = [&](const std::string& a) {
    if (auto i = rel.index_of(a)) return *i;
    throw Error(ErrorCode::kUnknownAttributeInDependency,
                "dependency references '" + a + "', absent from '" + rel.name() + "'");
  };
  BoundDependency b{{}, idx(dep.rhs), {}, std::nullopt};
  for (const auto& a : dep.lhs) b.lhs.push_back(idx(a));
  for (const auto& [a, v] : dep.condition) {
    auto i = idx(a);
    b.condition.emplace_back(i, Cell(v, rel.attributes()[i].type));
  }
  if (dep.rhsConstant) b.rhsConstant.emplace(*dep.rhsConstant, rel.attributes()[b.rhs].type);
  return b;
}

void mark_violations(const Relation& rel, const BoundDependency& dep, std::vector<char>& violating) {
  struct Group {
    std::string firstRhs;
    bool conflict = false;
    std::vector<std::size_t> members;
  };
  std::unordered_map<std::string, Group> groups;
  std::string key, rhsKey;
  for (std::size_t r = 0; r < rel.cardinality(); ++r) {
    const auto& row = rel.rows()[r];
    bool in_scope = std::all_of(dep.condition.begin(), dep.condition.end(),
                                [&](const auto& cond) { return row[cond.first] && *row[cond.first] == cond.second; });
    if (!in_scope || !row[dep.rhs]) continue;
    if (!std::all_of(dep.lhs.begin(), dep.lhs.end(), [&](std::size_t c) { return row[c].has_value(); })) continue;
    if (dep.rhsConstant) {
      if (!(*row[dep.rhs] == *dep.rhsConstant)) violating[r] = 1;
      continue;
    }
    key.clear();
    for (auto c : dep.lhs) append_key(key, *row[c]);
    rhsKey.clear();
    append_key(rhsKey, *row[dep.rhs]);
    auto [it, fresh] = groups.try_emplace(key);
    auto& g = it->second;
    if (fresh) g.firstRhs = rhsKey;
    else if (g.firstRhs != rhsKey) g.conflict = true;
    g.members.push_back(r);
  }
  // Every member of a group holding two distinct RHS values has a partner
  // that disagrees with it.
  for (const auto& [k, g] : groups)
    if (g.conflict)
      for (auto r : g.members) violating[r] = 1;
}

}  // namespace

std::vector<std::size_t> violating_rows(const Relation& rel, const QualityRuleSet& rules) {
  std::vector<BoundDependency> bound;
  for (const auto& dep : rules.dependencies) bound.push_back(bind(rel, dep));
  std::vector<char> violating(rel.cardinality(), 0);
  for (const auto& dep : bound) mark_violations(rel, dep, violating);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < violating.size(); ++r)
    if (violating[r]) out.push_back(r);
  return out;
}

ConsistencyResult assess_consistency(const Relation& rel, const QualityRuleSet& rules, double kmax) {
  require_rows(rel);
  ConsistencyResult out;
  out.nVio = violating_rows(rel, rules).size();
  if (rules.dependencies.empty()) {
    out.k = kmax;
    return out;
  }
  out.rate = static_cast<double>(out.nVio) / static_cast<double>(rel.cardinality());
  out.k = violation_score(out.rate, kmax);
  return out;
}

QualityProfile assess_all(const Relation& rel, const QualityRuleSet& rules, Instant now, double kmax) {
  rules.validate();
  const auto acc = assess_accuracy(rel, rules, kmax);
  const auto com = assess_completeness(rel, rules, kmax);
  const auto tim = assess_timeliness(rel, rules, now, kmax);
  const auto con = assess_consistency(rel, rules, kmax);

  QualityProfile p;
  p.k = {acc.k, com.k, tim.k, con.k};
  for (std::size_t i = 0; i < 4; ++i) p.violationRates[i] = std::pow(10.0, -p.k[i]);
  p.nAc = acc.nAc;
  p.nMis = com.nMis;
  p.nExp = tim.nExp;
  p.nVio = con.nVio;
  p.rows = rel.cardinality();
  p.cellTotal = rel.cell_total();
  p.timestampAttrCount = tim.timestampAttrCount;
  p.coveredNecessary = com.coveredNecessary;
  p.necessaryCount = com.necessaryCount;
  return p;
}

}  // namespace fairmarket
