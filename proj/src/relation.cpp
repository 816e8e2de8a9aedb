#include "fairmarket/relation.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "fairmarket/error.hpp"

namespace fairmarket {

namespace {

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

std::optional<int> parse_fixed_digits(std::string_view text) {
  int value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + (c - '0');
  }
  return value;
}

TypedValue parse_typed(std::string_view text, AttrType type, bool& conforms) {
  conforms = true;
  switch (type) {
    case AttrType::kText:
      return std::monostate{};
    case AttrType::kInteger:
      if (auto v = parse_number<std::int64_t>(text)) return *v;
      break;
    case AttrType::kReal:
      if (auto v = parse_number<double>(text)) return *v;
      break;
    case AttrType::kDate:
      if (auto v = parse_date(text)) return *v;
      break;
    case AttrType::kTimestamp:
      if (auto v = parse_instant(text)) return *v;
      break;
  }
  conforms = false;
  return std::monostate{};
}

}  // namespace

const char* to_string(AttrType type) noexcept {
  switch (type) {
    case AttrType::kInteger: return "integer";
    case AttrType::kReal: return "real";
    case AttrType::kText: return "text";
    case AttrType::kDate: return "date";
    case AttrType::kTimestamp: return "timestamp";
  }
  return "text";
}

AttrType parse_attr_type(std::string_view name) {
  if (name == "integer" || name == "int") return AttrType::kInteger;
  if (name == "real" || name == "double" || name == "number") return AttrType::kReal;
  if (name == "text" || name == "string") return AttrType::kText;
  if (name == "date") return AttrType::kDate;
  if (name == "timestamp" || name == "datetime") return AttrType::kTimestamp;
  throw Error(ErrorCode::kInvalidConfig, "unknown attribute type '" + std::string(name) + "'");
}

std::optional<Days> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto y = parse_fixed_digits(text.substr(0, 4));
  auto m = parse_fixed_digits(text.substr(5, 2));
  auto d = parse_fixed_digits(text.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{static_cast<unsigned>(*m)},
                                  std::chrono::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return Days{ymd};
}

std::optional<Instant> parse_instant(std::string_view text) {
  auto day = parse_date(text.substr(0, std::min<std::size_t>(text.size(), 10)));
  if (!day) return std::nullopt;
  if (text.size() == 10) return Instant{*day};
  std::string_view rest = text.substr(10);
  if (rest.back() == 'Z') rest.remove_suffix(1);
  if (rest.size() != 9 || (rest[0] != 'T' && rest[0] != ' ') || rest[3] != ':' || rest[6] != ':')
    return std::nullopt;
  auto hh = parse_fixed_digits(rest.substr(1, 2));
  auto mm = parse_fixed_digits(rest.substr(4, 2));
  auto ss = parse_fixed_digits(rest.substr(7, 2));
  if (!hh || !mm || !ss || *hh > 23 || *mm > 59 || *ss > 60) return std::nullopt;
  return Instant{*day} + std::chrono::hours{*hh} + std::chrono::minutes{*mm} +
         std::chrono::seconds{*ss};
}

std::string format_date(Days day) {
  std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string format_instant(Instant t) {
  auto day = std::chrono::floor<std::chrono::days>(t);
  std::chrono::hh_mm_ss hms{t - day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%02d:%02d:%02dZ", static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return format_date(Days{day}) + buf;
}

Cell::Cell(std::string text, AttrType declared) : text_(std::move(text)) {
  typed_ = parse_typed(text_, declared, conforms_);
}

std::optional<double> Cell::as_number() const {
  if (auto* i = std::get_if<std::int64_t>(&typed_)) return static_cast<double>(*i);
  if (auto* d = std::get_if<double>(&typed_)) return *d;
  return std::nullopt;
}

std::optional<Instant> Cell::as_instant() const {
  if (auto* t = std::get_if<Instant>(&typed_)) return *t;
  if (auto* d = std::get_if<Days>(&typed_)) return Instant{*d};
  return std::nullopt;
}

bool operator==(const Cell& a, const Cell& b) {
  if (a.typed_.index() != 0 && a.typed_.index() == b.typed_.index()) return a.typed_ == b.typed_;
  return a.text_ == b.text_;
}

Relation::Relation(std::string name, std::vector<Attribute> attributes)
    : name_(std::move(name)), attributes_(std::move(attributes)) {
  std::unordered_set<std::string> seen;
  for (const auto& a : attributes_) {
    if (a.name.empty() || !seen.insert(a.name).second)
      throw Error(ErrorCode::kInvalidConfig, "attribute names must be unique and non-empty: '" + a.name + "'");
  }
}

std::optional<std::size_t> Relation::index_of(std::string_view attr) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i)
    if (attributes_[i].name == attr) return i;
  return std::nullopt;
}

std::size_t Relation::require_index(std::string_view attr) const {
  if (auto i = index_of(attr)) return *i;
  throw Error(ErrorCode::kUnknownAttribute, "relation '" + name_ + "' has no attribute '" + std::string(attr) + "'");
}

std::vector<std::size_t> Relation::timestamp_columns() const {
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < attributes_.size(); ++i)
    if (attributes_[i].effectiveTimestamp) cols.push_back(i);
  return cols;
}

void Relation::append(const std::vector<std::optional<std::string>>& texts) {
  if (texts.size() != arity())
    throw Error(ErrorCode::kInvalidArgument, "row has " + std::to_string(texts.size()) +
                                                 " cells, relation '" + name_ + "' has " +
                                                 std::to_string(arity()) + " attributes");
  Row row;
  row.reserve(arity());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i] && !texts[i]->empty())
      row.emplace_back(Cell(*texts[i], attributes_[i].type));
    else
      row.emplace_back(std::nullopt);
  }
  rows_.push_back(std::move(row));
}

void Relation::set_cell(std::size_t row, std::size_t col, std::optional<std::string> text) {
  auto& slot = rows_.at(row).at(col);
  if (text && !text->empty())
    slot.emplace(std::move(*text), attributes_[col].type);
  else
    slot.reset();
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;  // current record has content
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          record.push_back(std::move(field));
          records.push_back(std::move(record));
        }
        record.clear();
        field.clear();
        any = false;
        break;
      default:
        field.push_back(c);
        any = true;
    }
  }
  if (quoted) throw Error(ErrorCode::kIOFailure, "unterminated quoted CSV field");
  if (any || !field.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

Relation load_csv(const std::filesystem::path& path, const std::vector<Attribute>& schema, std::string name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIOFailure, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::kIOFailure, "read failed on '" + path.string() + "'");

  auto records = parse_csv(buf.str());
  if (records.empty()) throw Error(ErrorCode::kHeaderMismatch, "'" + path.string() + "' has no header row");
  const auto& header = records.front();
  bool match = header.size() == schema.size();
  for (std::size_t i = 0; match && i < header.size(); ++i) match = header[i] == schema[i].name;
  if (!match) throw Error(ErrorCode::kHeaderMismatch, "header of '" + path.string() + "' does not match the schema");

  if (name.empty()) name = path.stem().string();
  Relation rel(std::move(name), schema);
  std::vector<std::optional<std::string>> texts(schema.size());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != schema.size())
      throw Error(ErrorCode::kIOFailure, "'" + path.string() + "' record " + std::to_string(r) + " has " +
                                             std::to_string(records[r].size()) + " fields");
    for (std::size_t c = 0; c < schema.size(); ++c) texts[c] = std::move(records[r][c]);
    rel.append(texts);
  }
  return rel;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const Relation& rel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIOFailure, "cannot write '" + path.string() + "'");
  for (std::size_t c = 0; c < rel.arity(); ++c) out << (c ? "," : "") << csv_field(rel.attributes()[c].name);
  out << '\n';
  for (const auto& row : rel.rows()) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      if (row[c]) out << csv_field(row[c]->text());
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIOFailure, "write failed on '" + path.string() + "'");
}

const char* to_string(Comparator cmp) noexcept {
  switch (cmp) {
    case Comparator::kEq: return "=";
    case Comparator::kNe: return "!=";
    case Comparator::kLt: return "<";
    case Comparator::kLe: return "<=";
    case Comparator::kGt: return ">";
    case Comparator::kGe: return ">=";
    case Comparator::kContains: return "~";
  }
  return "=";
}

Comparator parse_comparator(std::string_view token) {
  if (token == "=" || token == "==") return Comparator::kEq;
  if (token == "!=" || token == "<>") return Comparator::kNe;
  if (token == "<") return Comparator::kLt;
  if (token == "<=") return Comparator::kLe;
  if (token == ">") return Comparator::kGt;
  if (token == ">=") return Comparator::kGe;
  if (token == "~" || token == "contains") return Comparator::kContains;
  throw Error(ErrorCode::kInvalidArgument, "unknown comparator '" + std::string(token) + "'");
}

SelectionQuery parse_query(std::string_view text) {
  SelectionQuery q;
  if (auto bar = text.rfind('|'); bar != std::string_view::npos) {
    std::vector<std::string> cols;
    std::string_view list = text.substr(bar + 1);
    while (!list.empty()) {
      auto comma = list.find(',');
      cols.emplace_back(list.substr(0, comma));
      if (cols.back().empty()) throw Error(ErrorCode::kInvalidArgument, "empty projection column");
      list = comma == std::string_view::npos ? std::string_view{} : list.substr(comma + 1);
    }
    if (cols.empty()) throw Error(ErrorCode::kInvalidArgument, "empty projection");
    q.projection = std::move(cols);
    text = text.substr(0, bar);
  }
  auto colon = text.find(':');
  q.relation = std::string(text.substr(0, colon));
  if (q.relation.empty()) throw Error(ErrorCode::kInvalidArgument, "query names no relation");
  if (colon == std::string_view::npos) return q;
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    auto comma = rest.find(',');
    std::string_view term = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    auto op_at = term.find_first_of("=!<>~");
    if (op_at == std::string_view::npos || op_at == 0)
      throw Error(ErrorCode::kInvalidArgument, "malformed predicate '" + std::string(term) + "'");
    std::size_t op_len = 1;
    if (op_at + 1 < term.size() && term[op_at + 1] == '=' ) op_len = 2;
    if (term[op_at] == '<' && op_at + 1 < term.size() && term[op_at + 1] == '>') op_len = 2;
    q.predicates.push_back({std::string(term.substr(0, op_at)), parse_comparator(term.substr(op_at, op_len)),
                            std::string(term.substr(op_at + op_len))});
  }
  return q;
}

std::string format_query(const SelectionQuery& q) {
  std::string out = q.relation;
  for (std::size_t i = 0; i < q.predicates.size(); ++i) {
    const auto& p = q.predicates[i];
    out += i == 0 ? ":" : ",";
    out += p.attribute + to_string(p.op) + p.literal;
  }
  if (q.projection) {
    for (std::size_t i = 0; i < q.projection->size(); ++i) out += (i == 0 ? "|" : ",") + (*q.projection)[i];
  }
  return out;
}

namespace {

template <typename T>
bool compare(const T& a, const T& b, Comparator op) {
  switch (op) {
    case Comparator::kEq: return a == b;
    case Comparator::kNe: return a != b;
    case Comparator::kLt: return a < b;
    case Comparator::kLe: return a <= b;
    case Comparator::kGt: return a > b;
    case Comparator::kGe: return a >= b;
    case Comparator::kContains: return false;
  }
  return false;
}

struct BoundPredicate {
  std::size_t col;
  Comparator op;
  std::string literal;
  std::optional<double> number;
  std::optional<Instant> instant;
};

bool satisfies(const MaybeCell& cell, const BoundPredicate& p, AttrType type) {
  if (!cell) return false;
  if (p.op == Comparator::kContains) return cell->text().find(p.literal) != std::string::npos;
  if (type == AttrType::kText) return compare(cell->text(), p.literal, p.op);
  if (type == AttrType::kInteger || type == AttrType::kReal) {
    auto v = cell->as_number();
    if (v && p.number) return compare(*v, *p.number, p.op);
  } else {
    auto v = cell->as_instant();
    if (v && p.instant) return compare(*v, *p.instant, p.op);
  }
  // Non-conforming cell or literal: only textual (in)equality is meaningful.
  if (p.op == Comparator::kEq || p.op == Comparator::kNe) return compare(cell->text(), p.literal, p.op);
  return false;
}

}  // namespace

ResultSet run_query(const Relation& rel, const SelectionQuery& q) {
  if (!q.relation.empty() && q.relation != rel.name())
    throw Error(ErrorCode::kUnknownRelation, "query targets '" + q.relation + "', not '" + rel.name() + "'");

  std::vector<BoundPredicate> bound;
  for (const auto& p : q.predicates) {
    BoundPredicate b{rel.require_index(p.attribute), p.op, p.literal, std::nullopt, std::nullopt};
    b.number = parse_number<double>(p.literal);
    b.instant = parse_instant(p.literal);
    bound.push_back(std::move(b));
  }

  ResultSet out;
  std::vector<std::size_t> cols;
  if (q.projection) {
    for (const auto& a : *q.projection) cols.push_back(rel.require_index(a));
  } else {
    for (std::size_t i = 0; i < rel.arity(); ++i) cols.push_back(i);
  }
  for (auto c : cols) out.columns.push_back(rel.attributes()[c].name);

  for (std::size_t r = 0; r < rel.cardinality(); ++r) {
    const auto& row = rel.rows()[r];
    bool keep = std::all_of(bound.begin(), bound.end(), [&](const BoundPredicate& b) {
      return satisfies(row[b.col], b, rel.attributes()[b.col].type);
    });
    if (!keep) continue;
    out.rowIds.push_back(r);
    auto& projected = out.rows.emplace_back();
    projected.reserve(cols.size());
    for (auto c : cols) projected.push_back(row[c] ? std::optional<std::string>(row[c]->text()) : std::nullopt);
  }
  return out;
}

double base_price(const PricePoint& pp, std::size_t resultCardinality) {
  return pp.flatFee + pp.perTupleFee * static_cast<double>(resultCardinality);
}

}  // namespace fairmarket
