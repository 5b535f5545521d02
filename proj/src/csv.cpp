#include "sempipes/csv.hpp"

#include <charconv>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include "sempipes/errors.hpp"

namespace sempipes {

namespace {

struct Field {
  std::string text;
  bool quoted = false;
};

// Splits the whole document into records. Quoted fields may span lines.
std::vector<std::vector<Field>> tokenize(std::string_view text) {
  std::vector<std::vector<Field>> records;
  std::vector<Field> record;
  Field field;
  std::size_t line = 1;
  std::size_t i = 0;
  bool field_started = false;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field = Field{};
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };

  while (i < text.size()) {
    const char ch = text[i];
    if (ch == '"' && !field_started) {
      field.quoted = true;
      field_started = true;
      ++i;
      while (true) {
        if (i >= text.size()) throw ParseError("unterminated quoted field", line, 0);
        if (text[i] == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field.text.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        if (text[i] == '\n') ++line;
        field.text.push_back(text[i++]);
      }
      continue;
    }
    if (ch == ',') {
      end_field();
      ++i;
      continue;
    }
    if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      ++i;
      continue;
    }
    if (ch == '\n') {
      end_record();
      ++line;
      ++i;
      continue;
    }
    field.text.push_back(ch);
    field_started = true;
    ++i;
  }
  if (field_started || !record.empty()) end_record();
  return records;
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  return std::nullopt;
}

Kind infer_kind(const std::vector<const Field*>& cells) {
  bool all_numeric = true;
  bool all_bool = true;
  bool any_present = false;
  for (const Field* f : cells) {
    if (f->text.empty() && !f->quoted) continue;
    any_present = true;
    if (all_numeric && !parse_number(f->text)) all_numeric = false;
    if (all_bool && !parse_bool(f->text)) all_bool = false;
  }
  if (!any_present || all_numeric) return Kind::Numeric;
  if (all_bool) return Kind::Boolean;
  return Kind::String;
}

Cell convert(const Field& f, Kind kind, const std::string& column, std::size_t row) {
  if (f.text.empty() && !f.quoted) return Cell{};
  switch (kind) {
    case Kind::Numeric:
      if (auto v = parse_number(f.text)) return *v;
      break;
    case Kind::Boolean:
      if (auto v = parse_bool(f.text)) return *v;
      break;
    case Kind::String: return f.text;
  }
  throw ParseError("value '" + f.text + "' in column '" + column + "' is not " +
                       std::string(kind_name(kind)),
                   row + 1, 0);
}

bool needs_quotes(std::string_view s) {
  return s.empty() || s.find_first_of(",\"\r\n") != std::string_view::npos;
}

}  // namespace

Table parse_csv(std::string_view text, const KindMap& schema_hint) {
  auto records = tokenize(text);
  if (records.empty()) throw ParseError("missing header row", 1, 0);

  // Blank lines carry no fields unless the table has a single column, where
  // they are a missing value.
  auto is_blank = [](const std::vector<Field>& rec) {
    return rec.size() == 1 && rec[0].text.empty() && !rec[0].quoted;
  };
  if (records[0].size() > 1)
    std::erase_if(records, is_blank);

  std::vector<std::string> header;
  std::set<std::string> seen;
  for (auto& f : records[0]) {
    if (!seen.insert(f.text).second) throw SchemaError("duplicate header '" + f.text + "'");
    header.push_back(f.text);
  }

  const std::size_t rows = records.size() - 1;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size())
      throw ParseError("row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                           " fields, expected " + std::to_string(header.size()),
                       r + 1, 0);
  }

  std::vector<Column> columns;
  columns.reserve(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::vector<const Field*> cells;
    cells.reserve(rows);
    for (std::size_t r = 1; r < records.size(); ++r) cells.push_back(&records[r][c]);
    Kind kind;
    if (auto it = schema_hint.find(header[c]); it != schema_hint.end())
      kind = it->second;
    else
      kind = infer_kind(cells);
    std::vector<Cell> values;
    values.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) values.push_back(convert(*cells[r], kind, header[c], r + 1));
    columns.emplace_back(header[c], kind, std::move(values));
  }
  return Table(std::move(columns));
}

Table read_csv(const std::filesystem::path& path, const KindMap& schema_hint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema_hint);
}

void write_csv(std::ostream& out, const Table& t) {
  auto emit = [&](std::string_view s, bool quote) {
    if (!quote) {
      out << s;
      return;
    }
    out << '"';
    for (char ch : s) {
      if (ch == '"') out << '"';
      out << ch;
    }
    out << '"';
  };
  for (std::size_t c = 0; c < t.column_count(); ++c) {
    if (c) out << ',';
    emit(t.column(c).name(), needs_quotes(t.column(c).name()));
  }
  out << '\n';
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    for (std::size_t c = 0; c < t.column_count(); ++c) {
      if (c) out << ',';
      const Cell& cell = t.column(c)[r];
      if (is_missing(cell)) continue;
      const std::string text = format_cell(cell);
      emit(text, std::holds_alternative<std::string>(cell) && needs_quotes(text));
    }
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  write_csv(out, t);
}

}  // namespace sempipes
