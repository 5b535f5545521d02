#include "sempipes/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "sempipes/errors.hpp"
#include "sempipes/random.hpp"

namespace sempipes {

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::Numeric: return "numeric";
    case Kind::String: return "string";
    case Kind::Boolean: return "boolean";
  }
  return "?";
}

std::optional<Kind> parse_kind(std::string_view name) {
  if (name == "numeric") return Kind::Numeric;
  if (name == "string") return Kind::String;
  if (name == "boolean") return Kind::Boolean;
  return std::nullopt;
}

bool cell_conforms(const Cell& c, Kind kind) {
  switch (kind) {
    case Kind::Numeric: return is_missing(c) || std::holds_alternative<double>(c);
    case Kind::String: return is_missing(c) || std::holds_alternative<std::string>(c);
    case Kind::Boolean: return is_missing(c) || std::holds_alternative<bool>(c);
  }
  return false;
}

std::string format_cell(const Cell& c) {
  if (is_missing(c)) return "";
  if (const auto* b = std::get_if<bool>(&c)) return *b ? "true" : "false";
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  const double v = std::get<double>(c);
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

int compare_cells(const Cell& a, const Cell& b) {
  if (a.index() != b.index()) return a.index() < b.index() ? -1 : 1;
  if (is_missing(a)) return 0;
  if (const auto* x = std::get_if<double>(&a)) {
    const double y = std::get<double>(b);
    return *x < y ? -1 : (y < *x ? 1 : 0);
  }
  if (const auto* x = std::get_if<bool>(&a)) {
    const bool y = std::get<bool>(b);
    return *x == y ? 0 : (*x ? 1 : -1);
  }
  const int r = std::get<std::string>(a).compare(std::get<std::string>(b));
  return r < 0 ? -1 : (r > 0 ? 1 : 0);
}

// ---------------------------------------------------------------- Column

Column::Column(std::string name, Kind kind, std::vector<Cell> cells)
    : name_(std::move(name)), kind_(kind), cells_(std::move(cells)) {
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (!cell_conforms(cells_[i], kind_))
      throw SchemaError("column '" + name_ + "': cell " + std::to_string(i) +
                        " does not conform to kind " + std::string(kind_name(kind_)));
  }
}

Column Column::numeric(std::string name, const std::vector<std::optional<double>>& values) {
  std::vector<Cell> cells;
  cells.reserve(values.size());
  for (const auto& v : values) cells.push_back(v ? Cell(*v) : Cell());
  return Column(std::move(name), Kind::Numeric, std::move(cells));
}

Column Column::strings(std::string name, const std::vector<std::optional<std::string>>& values) {
  std::vector<Cell> cells;
  cells.reserve(values.size());
  for (const auto& v : values) cells.push_back(v ? Cell(*v) : Cell());
  return Column(std::move(name), Kind::String, std::move(cells));
}

Column Column::booleans(std::string name, const std::vector<std::optional<bool>>& values) {
  std::vector<Cell> cells;
  cells.reserve(values.size());
  for (const auto& v : values) cells.push_back(v ? Cell(*v) : Cell());
  return Column(std::move(name), Kind::Boolean, std::move(cells));
}

Column Column::missing(std::string name, Kind kind, std::size_t rows) {
  return Column(std::move(name), kind, std::vector<Cell>(rows));
}

std::size_t Column::missing_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells_.begin(), cells_.end(), [](const Cell& c) { return is_missing(c); }));
}

Column Column::take(std::span<const std::size_t> rows) const {
  std::vector<Cell> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(cells_.at(r));
  return Column(name_, kind_, std::move(out));
}

// ---------------------------------------------------------------- Table

Table::Table(std::vector<Column> columns) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (!seen.insert(columns[i].name()).second)
      throw SchemaError("duplicate column name '" + columns[i].name() + "'");
    if (i == 0) rows_ = columns[i].size();
    if (columns[i].size() != rows_)
      throw SchemaError("column '" + columns[i].name() + "' has " +
                        std::to_string(columns[i].size()) + " cells, expected " +
                        std::to_string(rows_));
  }
  columns_.reserve(columns.size());
  for (auto& c : columns) columns_.push_back(std::make_shared<const Column>(std::move(c)));
}

Table Table::empty_rows(std::size_t rows) {
  Table t;
  t.rows_ = rows;
  return t;
}

const Column& Table::column(std::string_view name) const {
  if (const Column* c = find(name)) return *c;
  throw SchemaError("unknown column '" + std::string(name) + "'");
}

const Column* Table::find(std::string_view name) const {
  for (const auto& c : columns_)
    if (c->name() == name) return c.get();
  return nullptr;
}

std::vector<std::string> Table::names() const {
  std::vector<std::string> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c->name());
  return out;
}

std::map<std::string, Kind> Table::schema() const {
  std::map<std::string, Kind> out;
  for (const auto& c : columns_) out.emplace(c->name(), c->kind());
  return out;
}

Table Table::with_column(Column column) const {
  if (has(column.name())) throw SchemaError("duplicate column name '" + column.name() + "'");
  if (!columns_.empty() && column.size() != rows_)
    throw SchemaError("column '" + column.name() + "' has " + std::to_string(column.size()) +
                      " cells, expected " + std::to_string(rows_));
  if (columns_.empty() && rows_ != 0 && column.size() != rows_)
    throw SchemaError("column '" + column.name() + "' row count mismatch");
  Table out = *this;
  out.rows_ = column.size();
  out.columns_.push_back(std::make_shared<const Column>(std::move(column)));
  return out;
}

Table Table::with_replaced(Column column) const {
  if (column.size() != rows_)
    throw SchemaError("replacement column '" + column.name() + "' row count mismatch");
  Table out = *this;
  for (auto& c : out.columns_) {
    if (c->name() == column.name()) {
      c = std::make_shared<const Column>(std::move(column));
      return out;
    }
  }
  throw SchemaError("unknown column '" + column.name() + "'");
}

Table Table::without(std::span<const std::string> names) const {
  Table out = Table::empty_rows(rows_);
  for (const auto& c : columns_)
    if (std::find(names.begin(), names.end(), c->name()) == names.end())
      out.columns_.push_back(c);
  return out;
}

Table Table::select(std::span<const std::string> names) const {
  Table out = Table::empty_rows(rows_);
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw SchemaError("column '" + n + "' selected twice");
    const Column* c = find(n);
    if (c == nullptr) throw SchemaError("unknown column '" + n + "'");
    for (const auto& p : columns_)
      if (p.get() == c) out.columns_.push_back(p);
  }
  return out;
}

Table Table::take(std::span<const std::size_t> rows) const {
  Table out = Table::empty_rows(rows.size());
  for (const auto& c : columns_) out.columns_.push_back(std::make_shared<const Column>(c->take(rows)));
  return out;
}

Table Table::head(std::size_t n) const {
  std::vector<std::size_t> rows(std::min(n, rows_));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return take(rows);
}

Table Table::append_rows(const Table& other) const {
  if (names() != other.names()) throw SchemaError("append_rows: column names differ");
  Table out = Table::empty_rows(rows_ + other.rows_);
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const Column& a = *columns_[i];
    const Column& b = *other.columns_[i];
    if (a.kind() != b.kind()) throw SchemaError("append_rows: kind mismatch in '" + a.name() + "'");
    std::vector<Cell> cells = a.cells();
    cells.insert(cells.end(), b.cells().begin(), b.cells().end());
    out.columns_.push_back(std::make_shared<const Column>(a.name(), a.kind(), std::move(cells)));
  }
  return out;
}

Table Table::hconcat(const Table& other) const {
  if (other.rows_ != rows_ && !(other.columns_.empty() || columns_.empty()))
    throw SchemaError("hconcat: row counts differ");
  Table out = *this;
  if (columns_.empty()) out.rows_ = other.rows_;
  for (const auto& c : other.columns_) {
    if (out.has(c->name())) throw SchemaError("duplicate column name '" + c->name() + "'");
    out.columns_.push_back(c);
  }
  return out;
}

bool Table::operator==(const Table& other) const {
  if (rows_ != other.rows_ || columns_.size() != other.columns_.size()) return false;
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (!(*columns_[i] == *other.columns_[i])) return false;
  return true;
}

// ---------------------------------------------------------------- joins

namespace {

struct CellHash {
  std::size_t operator()(const Cell& c) const {
    if (const auto* d = std::get_if<double>(&c)) return std::hash<double>{}(*d == 0.0 ? 0.0 : *d);
    if (const auto* b = std::get_if<bool>(&c)) return *b ? 0x51ed27 : 0x3ab1;
    if (const auto* s = std::get_if<std::string>(&c)) return std::hash<std::string>{}(*s);
    return 0;
  }
};

struct CellEq {
  bool operator()(const Cell& a, const Cell& b) const { return compare_cells(a, b) == 0; }
};

using CellIndex = std::unordered_map<Cell, std::size_t, CellHash, CellEq>;

}  // namespace

Table left_outer_join(const Table& left, std::string_view left_key, const Table& right,
                      std::string_view right_key) {
  const Column& lk = left.column(left_key);
  const Column& rk = right.column(right_key);
  if (lk.kind() != rk.kind())
    throw JoinError("join keys '" + std::string(left_key) + "' and '" + std::string(right_key) +
                    "' have different kinds");

  CellIndex index;
  for (std::size_t r = 0; r < rk.size(); ++r) {
    if (rk.missing_at(r)) continue;
    if (!index.emplace(rk[r], r).second)
      throw JoinError("duplicate right key value '" + format_cell(rk[r]) + "' in column '" +
                      std::string(right_key) + "'");
  }

  std::vector<std::optional<std::size_t>> match(left.row_count());
  for (std::size_t i = 0; i < lk.size(); ++i) {
    if (lk.missing_at(i)) continue;
    if (auto it = index.find(lk[i]); it != index.end()) match[i] = it->second;
  }

  Table out = left;
  for (std::size_t c = 0; c < right.column_count(); ++c) {
    const Column& src = right.column(c);
    if (src.name() == right_key) continue;
    if (left.has(src.name()))
      throw JoinError("join would duplicate column '" + src.name() + "'");
    std::vector<Cell> cells(left.row_count());
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (match[i]) cells[i] = src[*match[i]];
    out = out.with_column(Column(src.name(), src.kind(), std::move(cells)));
  }
  return out;
}

// ---------------------------------------------------------------- aggregation

std::string_view agg_function_name(AggFunction fn) {
  switch (fn) {
    case AggFunction::Sum: return "sum";
    case AggFunction::Mean: return "mean";
    case AggFunction::Min: return "min";
    case AggFunction::Max: return "max";
    case AggFunction::Std: return "std";
    case AggFunction::Count: return "count";
    case AggFunction::NUnique: return "nunique";
    case AggFunction::Mode: return "mode";
  }
  return "?";
}

std::optional<AggFunction> parse_agg_function(std::string_view name) {
  for (auto fn : {AggFunction::Sum, AggFunction::Mean, AggFunction::Min, AggFunction::Max,
                  AggFunction::Std, AggFunction::Count, AggFunction::NUnique, AggFunction::Mode})
    if (agg_function_name(fn) == name) return fn;
  return std::nullopt;
}

bool agg_accepts(AggFunction fn, Kind source) {
  switch (fn) {
    case AggFunction::Sum:
    case AggFunction::Mean:
    case AggFunction::Min:
    case AggFunction::Max:
    case AggFunction::Std: return source == Kind::Numeric;
    default: return true;
  }
}

Kind agg_output_kind(AggFunction fn, Kind source) {
  switch (fn) {
    case AggFunction::Count:
    case AggFunction::NUnique: return Kind::Numeric;
    case AggFunction::Mode: return source;
    default: return Kind::Numeric;
  }
}

Cell aggregate_cells(AggFunction fn, std::span<const Cell> values) {
  std::vector<const Cell*> present;
  present.reserve(values.size());
  for (const auto& v : values)
    if (!is_missing(v)) present.push_back(&v);

  switch (fn) {
    case AggFunction::Count: return static_cast<double>(present.size());
    case AggFunction::NUnique: {
      std::set<Cell, CellLess> distinct;
      for (const Cell* c : present) distinct.insert(*c);
      return static_cast<double>(distinct.size());
    }
    case AggFunction::Sum: {
      double s = 0.0;
      for (const Cell* c : present) s += std::get<double>(*c);
      return s;
    }
    default: break;
  }
  if (present.empty()) return Cell{};

  switch (fn) {
    case AggFunction::Mean:
    case AggFunction::Std: {
      double s = 0.0;
      for (const Cell* c : present) s += std::get<double>(*c);
      const double mean = s / static_cast<double>(present.size());
      if (fn == AggFunction::Mean) return mean;
      if (present.size() == 1) return 0.0;
      double ss = 0.0;
      for (const Cell* c : present) {
        const double d = std::get<double>(*c) - mean;
        ss += d * d;
      }
      return std::sqrt(ss / static_cast<double>(present.size()));
    }
    case AggFunction::Min:
    case AggFunction::Max: {
      double best = std::get<double>(*present.front());
      for (const Cell* c : present) {
        const double v = std::get<double>(*c);
        best = fn == AggFunction::Min ? std::min(best, v) : std::max(best, v);
      }
      return best;
    }
    case AggFunction::Mode: {
      std::map<Cell, std::size_t, CellLess> counts;
      for (const Cell* c : present) ++counts[*c];
      const Cell* best = nullptr;
      std::size_t best_count = 0;
      // Ascending iteration: strict > keeps the smallest value on ties.
      for (const auto& [value, count] : counts) {
        if (count > best_count) {
          best = &value;
          best_count = count;
        }
      }
      return *best;
    }
    default: break;
  }
  return Cell{};
}

Table group_aggregate(const Table& t, std::string_view key, std::span<const AggSpec> aggs) {
  const Column& keys = t.column(key);
  std::vector<const Column*> sources;
  std::set<std::string> outputs{std::string(key)};
  for (const auto& a : aggs) {
    const Column& src = t.column(a.source);
    if (!agg_accepts(a.function, src.kind()))
      throw TypeError(std::string(agg_function_name(a.function)) + " is not defined for " +
                      std::string(kind_name(src.kind())) + " column '" + a.source + "'");
    if (!outputs.insert(a.output).second)
      throw SchemaError("duplicate aggregate output '" + a.output + "'");
    sources.push_back(&src);
  }

  CellIndex group_of;
  std::vector<std::vector<std::size_t>> members;
  std::vector<Cell> group_keys;
  for (std::size_t r = 0; r < keys.size(); ++r) {
    if (keys.missing_at(r)) continue;
    auto [it, inserted] = group_of.emplace(keys[r], members.size());
    if (inserted) {
      members.emplace_back();
      group_keys.push_back(keys[r]);
    }
    members[it->second].push_back(r);
  }

  std::vector<Column> cols;
  cols.emplace_back(std::string(key), keys.kind(), group_keys);
  for (std::size_t a = 0; a < aggs.size(); ++a) {
    std::vector<Cell> out;
    out.reserve(members.size());
    std::vector<Cell> buf;
    for (const auto& rows : members) {
      buf.clear();
      for (std::size_t r : rows) buf.push_back((*sources[a])[r]);
      out.push_back(aggregate_cells(aggs[a].function, buf));
    }
    cols.emplace_back(aggs[a].output, agg_output_kind(aggs[a].function, sources[a]->kind()),
                      std::move(out));
  }
  return Table(std::move(cols));
}

// ---------------------------------------------------------------- profiling

TableProfile profile(const Table& t, std::uint64_t seed) {
  TableProfile p;
  p.row_count = t.row_count();
  p.column_count = t.column_count();
  if (t.row_count() == 0) return p;

  // One row permutation shared by all columns keeps samples row-aligned.
  std::vector<std::size_t> order(t.row_count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x70f11e));
  rng.shuffle(order);

  for (std::size_t c = 0; c < t.column_count(); ++c) {
    const Column& col = t.column(c);
    ColumnProfile cp;
    cp.name = col.name();
    cp.kind = col.kind();
    cp.missing_fraction =
        static_cast<double>(col.missing_count()) / static_cast<double>(t.row_count());
    std::set<Cell, CellLess> distinct;
    for (const auto& cell : col.cells())
      if (!is_missing(cell)) distinct.insert(cell);
    cp.distinct_count = distinct.size();
    if (col.kind() == Kind::Numeric) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& cell : col.cells()) {
        if (is_missing(cell)) continue;
        const double v = std::get<double>(cell);
        cp.min = cp.min ? std::min(*cp.min, v) : v;
        cp.max = cp.max ? std::max(*cp.max, v) : v;
        sum += v;
        ++n;
      }
      if (n > 0) {
        cp.mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& cell : col.cells())
          if (!is_missing(cell)) ss += std::pow(std::get<double>(cell) - *cp.mean, 2);
        cp.std = std::sqrt(ss / static_cast<double>(n));
      }
    }
    for (std::size_t r : order) {
      if (cp.samples.size() == 5) break;
      if (!col.missing_at(r)) cp.samples.push_back(format_cell(col[r]));
    }
    p.columns.push_back(std::move(cp));
  }
  return p;
}

Table sample_rows(const Table& t, std::size_t n, std::uint64_t seed) {
  if (n >= t.row_count()) return t;
  const auto rows = sample_indices(t.row_count(), n, seed);
  return t.take(rows);
}

}  // namespace sempipes
