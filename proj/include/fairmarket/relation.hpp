#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fairmarket {

enum class AttrType { kInteger, kReal, kText, kDate, kTimestamp };

const char* to_string(AttrType type) noexcept;
AttrType parse_attr_type(std::string_view name);

using Days = std::chrono::sys_days;
using Instant = std::chrono::sys_seconds;

/// Parses "YYYY-MM-DD". Returns nullopt on anything else (including invalid
/// calendar dates such as 2013-02-30).
std::optional<Days> parse_date(std::string_view text);

/// Parses ISO-8601 "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS" with optional
/// trailing "Z". A bare date means midnight UTC.
std::optional<Instant> parse_instant(std::string_view text);

std::string format_date(Days day);
std::string format_instant(Instant t);

struct Attribute {
  std::string name;
  AttrType type = AttrType::kText;
  /// Cells of this attribute are effective timestamps checked for expiry.
  bool effectiveTimestamp = false;
};

/// Typed reading of a cell. std::monostate marks text that did not parse as
/// the attribute's declared type; text attributes keep their value in the
/// raw text only and also use std::monostate here.
using TypedValue = std::variant<std::monostate, std::int64_t, double, Days, Instant>;

class Cell {
 public:
  Cell(std::string text, AttrType declared);

  const std::string& text() const noexcept { return text_; }
  const TypedValue& typed() const noexcept { return typed_; }

  /// True when the raw text parses as the declared attribute type.
  bool conforms() const noexcept { return conforms_; }

  std::optional<double> as_number() const;
  std::optional<Instant> as_instant() const;

  /// Value equality: typed comparison when both sides parsed to the same
  /// kind, raw text comparison otherwise.
  friend bool operator==(const Cell& a, const Cell& b);

 private:
  std::string text_;
  TypedValue typed_;
  bool conforms_ = true;
};

using MaybeCell = std::optional<Cell>;
using Row = std::vector<MaybeCell>;

class Relation {
 public:
  Relation(std::string name, std::vector<Attribute> attributes);

  const std::string& name() const noexcept { return name_; }
  const std::vector<Attribute>& attributes() const noexcept { return attributes_; }
  const std::vector<Row>& rows() const noexcept { return rows_; }

  std::size_t arity() const noexcept { return attributes_.size(); }
  std::size_t cardinality() const noexcept { return rows_.size(); }
  std::size_t cell_total() const noexcept { return arity() * cardinality(); }

  std::optional<std::size_t> index_of(std::string_view attr) const;
  /// Throws kUnknownAttribute.
  std::size_t require_index(std::string_view attr) const;
  std::vector<std::size_t> timestamp_columns() const;

  /// Appends a row of raw text cells; nullopt is a missing cell.
  void append(const std::vector<std::optional<std::string>>& texts);
  void set_cell(std::size_t row, std::size_t col, std::optional<std::string> text);
  const MaybeCell& cell(std::size_t row, std::size_t col) const { return rows_.at(row).at(col); }

 private:
  std::string name_;
  std::vector<Attribute> attributes_;
  std::vector<Row> rows_;
};

/// Reads an RFC-4180 CSV whose header must list exactly the declared
/// attribute names in order. Empty fields load as missing cells; fields that
/// do not parse as their declared type load as raw text.
Relation load_csv(const std::filesystem::path& path, const std::vector<Attribute>& schema,
                  std::string name = {});

/// Splits CSV text into records; exposed for the loader and its tests.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

void write_csv(const std::filesystem::path& path, const Relation& rel);

enum class Comparator { kEq, kNe, kLt, kLe, kGt, kGe, kContains };

const char* to_string(Comparator cmp) noexcept;
Comparator parse_comparator(std::string_view token);

struct Predicate {
  std::string attribute;
  Comparator op = Comparator::kEq;
  std::string literal;
};

struct SelectionQuery {
  std::string relation;
  std::vector<Predicate> predicates;  // conjunctive
  std::optional<std::vector<std::string>> projection;
};

/// Parses "relation" or "relation:attr<op>literal,attr<op>literal" with ops
/// = != < <= > >= and ~ (contains), optionally followed by "|col,col" to
/// project the result.
SelectionQuery parse_query(std::string_view text);
std::string format_query(const SelectionQuery& q);

struct ResultSet {
  std::vector<std::string> columns;
  std::vector<std::size_t> rowIds;
  std::vector<std::vector<std::optional<std::string>>> rows;

  std::size_t size() const noexcept { return rows.size(); }
};

/// Missing cells never satisfy a predicate, whatever the comparator.
ResultSet run_query(const Relation& rel, const SelectionQuery& q);

struct PricePoint {
  std::string relation;
  double perTupleFee = 0.0;
  double flatFee = 0.0;
};

/// flatFee + perTupleFee * resultCardinality, in major currency units.
double base_price(const PricePoint& pp, std::size_t resultCardinality);

}  // namespace fairmarket
