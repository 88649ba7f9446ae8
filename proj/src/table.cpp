#include "safempc/table.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "safempc/errors.hpp"

namespace safempc {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view text) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  // from_chars does not accept a leading '+'.
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
  return value;
}

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw IoError("row has " + std::to_string(row.size()) + " cells, table has " +
                  std::to_string(columns.size()) + " columns");
  }
  rows.push_back(std::move(row));
}

TraceFormat trace_format_from_string(const std::string& name) {
  if (name == "csv") return TraceFormat::kCsv;
  if (name == "json") return TraceFormat::kJson;
  throw ConfigError("unknown trace format '" + name + "'");
}

namespace {

std::string quote_field(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string cell_text(const Cell& cell) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return "";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(v);
        } else {
          return quote_field(v);
        }
      },
      cell);
}

// Splits one CSV record, honouring quoted fields that may span lines.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw IoError("CSV: unterminated quoted field");
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

Cell parse_cell(const std::string& text, ColumnType type) {
  if (type == ColumnType::kText) return text;
  if (text.empty()) return std::monostate{};
  if (type == ColumnType::kInteger) {
    std::int64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
      throw IoError("CSV: bad integer '" + text + "'");
    }
    return v;
  }
  const auto v = parse_double(text);
  if (!v) throw IoError("CSV: bad real '" + text + "'");
  return *v;
}

}  // namespace

void write_csv(const Table& table, std::ostream& out) {
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    out << (c ? "," : "") << quote_field(table.columns[c].name);
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c ? "," : "") << cell_text(row[c]);
    }
    out << '\n';
  }
}

std::string to_csv(const Table& table) {
  std::ostringstream os;
  write_csv(table, os);
  return os.str();
}

Table read_csv(std::istream& in, const std::vector<Column>& columns) {
  Table table;
  table.columns = columns;
  std::vector<std::string> fields;
  if (!read_record(in, fields)) throw IoError("CSV: missing header");
  if (fields.size() != columns.size()) throw IoError("CSV: header width mismatch");
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (fields[c] != columns[c].name) {
      throw IoError("CSV: expected column '" + columns[c].name + "', found '" +
                    fields[c] + "'");
    }
  }
  while (read_record(in, fields)) {
    if (fields.size() != columns.size()) throw IoError("CSV: row width mismatch");
    std::vector<Cell> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      row.push_back(parse_cell(fields[c], columns[c].type));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

Table csv_from_string(const std::string& text, const std::vector<Column>& columns) {
  std::istringstream in(text);
  return read_csv(in, columns);
}

std::string to_json(const Table& table) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string& key = table.columns[c].name;
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
              obj[key] = nullptr;
            } else if constexpr (std::is_same_v<T, double>) {
              // JSON has no infinities; keep them readable as strings.
              if (std::isfinite(v)) {
                obj[key] = v;
              } else {
                obj[key] = format_double(v);
              }
            } else {
              obj[key] = v;
            }
          },
          row[c]);
    }
    rows.push_back(std::move(obj));
  }
  return rows.dump(1) + "\n";
}

void write_trace(const Table& table, const std::filesystem::path& path,
                 TraceFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (format == TraceFormat::kCsv) {
    write_csv(table, out);
  } else {
    out << to_json(table);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Table read_trace_csv(const std::filesystem::path& path,
                     const std::vector<Column>& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in, columns);
}

}  // namespace safempc
