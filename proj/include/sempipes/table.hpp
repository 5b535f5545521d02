#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sempipes {

enum class Kind { Numeric, String, Boolean };

std::string_view kind_name(Kind kind);
std::optional<Kind> parse_kind(std::string_view name);

/// A single cell. std::monostate is the missing value.
using Cell = std::variant<std::monostate, double, bool, std::string>;

inline bool is_missing(const Cell& c) { return std::holds_alternative<std::monostate>(c); }
bool cell_conforms(const Cell& c, Kind kind);
std::string format_cell(const Cell& c);

/// Total order over cells of one kind: missing first, then numeric order,
/// false < true, or byte-wise lexicographic order.
int compare_cells(const Cell& a, const Cell& b);

struct CellLess {
  bool operator()(const Cell& a, const Cell& b) const { return compare_cells(a, b) < 0; }
};

class Column {
 public:
  Column(std::string name, Kind kind, std::vector<Cell> cells);

  static Column numeric(std::string name, const std::vector<std::optional<double>>& values);
  static Column strings(std::string name, const std::vector<std::optional<std::string>>& values);
  static Column booleans(std::string name, const std::vector<std::optional<bool>>& values);
  static Column missing(std::string name, Kind kind, std::size_t rows);

  const std::string& name() const { return name_; }
  Kind kind() const { return kind_; }
  std::size_t size() const { return cells_.size(); }
  const Cell& operator[](std::size_t i) const { return cells_[i]; }
  const std::vector<Cell>& cells() const { return cells_; }

  bool missing_at(std::size_t i) const { return is_missing(cells_[i]); }
  double number(std::size_t i) const { return std::get<double>(cells_[i]); }
  std::size_t missing_count() const;

  Column renamed(std::string name) const { return Column(std::move(name), kind_, cells_); }
  Column take(std::span<const std::size_t> rows) const;

  bool operator==(const Column& other) const = default;

 private:
  std::string name_;
  Kind kind_;
  std::vector<Cell> cells_;
};

/// Immutable columnar table. Columns are shared between tables derived from
/// one another, so copies are cheap.
class Table {
 public:
  Table() = default;
  explicit Table(std::vector<Column> columns);
  // Zero-column table that still carries a row count.
  static Table empty_rows(std::size_t rows);

  std::size_t row_count() const { return rows_; }
  std::size_t column_count() const { return columns_.size(); }
  bool empty() const { return columns_.empty(); }

  const Column& column(std::size_t i) const { return *columns_[i]; }
  const Column& column(std::string_view name) const;
  const Column* find(std::string_view name) const;
  bool has(std::string_view name) const { return find(name) != nullptr; }
  std::vector<std::string> names() const;
  std::map<std::string, Kind> schema() const;

  Table with_column(Column column) const;
  Table with_replaced(Column column) const;
  Table without(std::span<const std::string> names) const;
  Table select(std::span<const std::string> names) const;
  Table take(std::span<const std::size_t> rows) const;
  Table head(std::size_t n) const;
  /// Appends the rows of `other`, which must have an identical schema.
  Table append_rows(const Table& other) const;
  /// Column-wise concatenation; names must be disjoint and row counts equal.
  Table hconcat(const Table& other) const;

  bool operator==(const Table& other) const;

 private:
  std::vector<std::shared_ptr<const Column>> columns_;
  std::size_t rows_ = 0;
};

enum class AggFunction { Sum, Mean, Min, Max, Std, Count, NUnique, Mode };

std::string_view agg_function_name(AggFunction fn);
std::optional<AggFunction> parse_agg_function(std::string_view name);
/// Kind of the aggregated output for a source of kind `source`.
Kind agg_output_kind(AggFunction fn, Kind source);
bool agg_accepts(AggFunction fn, Kind source);

struct AggSpec {
  std::string source;
  AggFunction function;
  std::string output;
};

/// Left outer join on `left_key` = `right_key`. Right key values must be
/// unique. Every right column except the key is appended; unmatched rows
/// receive missing.
Table left_outer_join(const Table& left, std::string_view left_key, const Table& right,
                      std::string_view right_key);

/// One row per distinct non-missing key, in order of first appearance.
/// Population std; singleton groups have std 0; mode ties resolve to the
/// smallest value.
Table group_aggregate(const Table& t, std::string_view key, std::span<const AggSpec> aggs);

Cell aggregate_cells(AggFunction fn, std::span<const Cell> values);

struct ColumnProfile {
  std::string name;
  Kind kind = Kind::Numeric;
  double missing_fraction = 0.0;
  std::size_t distinct_count = 0;
  std::optional<double> min;
  std::optional<double> max;
  std::optional<double> mean;
  std::optional<double> std;
  std::vector<std::string> samples;
};

struct TableProfile {
  std::size_t row_count = 0;
  std::size_t column_count = 0;
  std::vector<ColumnProfile> columns;
};

TableProfile profile(const Table& t, std::uint64_t seed);

/// min(n, row_count) rows drawn uniformly without replacement, emitted in
/// their original order.
Table sample_rows(const Table& t, std::size_t n, std::uint64_t seed);

}  // namespace sempipes
