#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace safempc {

/// 17 significant digits, enough to reproduce
/// every finite double exactly. Non-finite values print as inf, -inf, nan.
std::string format_double(double value);

/// Inverse of format_double; rejects trailing garbage.
std::optional<double> parse_double(std::string_view text);

enum class ColumnType { kInteger, kReal, kText };

struct Column {
  std::string name;
  ColumnType type = ColumnType::kReal;
  bool operator==(const Column&) const = default;
};

/// monostate is an absent value (empty CSV field, JSON null).
using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;

struct Table {
  std::vector<Column> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row);
  bool operator==(const Table&) const = default;
};

enum class TraceFormat { kCsv, kJson };

TraceFormat trace_format_from_string(const std::string& name);

// CSV: header line of column names, one record per line, '\n' line endings,
// RFC-4180 quoting for fields containing a comma, quote, or line break.
void write_csv(const Table& table, std::ostream& out);
std::string to_csv(const Table& table);

/// Parses CSV produced for `columns`; throws IoError when the header or a
/// field does not match the schema.
Table read_csv(std::istream& in, const std::vector<Column>& columns);
Table csv_from_string(const std::string& text, const std::vector<Column>& columns);

/// JSON mirror: an array of objects keyed by column name.
std::string to_json(const Table& table);

/// Writes `table` to `path` in the requested format. Throws IoError.
void write_trace(const Table& table, const std::filesystem::path& path,
                 TraceFormat format = TraceFormat::kCsv);

Table read_trace_csv(const std::filesystem::path& path,
                     const std::vector<Column>& columns);

}  // namespace safempc
