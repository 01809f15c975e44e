#pragma once

#include <optional>
#include <string>
#include <vector>

namespace cityprobe::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or nullopt when absent.
  std::optional<size_t> column(const std::string& name) const;
};

/// Parses RFC-4180 CSV text: quoted fields, embedded commas/quotes/newlines,
/// CRLF or LF line endings. The first record is the header.
Table parse(const std::string& text);

Table read_file(const std::string& path);

/// Quotes a field only when it contains a comma, quote, or newline.
std::string escape_field(const std::string& field);

std::string serialize(const Table& table);

void write_file(const std::string& path, const Table& table);

/// Shortest decimal string that round-trips through a double.
std::string format_double(double value);

/// Strict double parse of a whole field; nullopt on any trailing garbage.
std::optional<double> parse_double(const std::string& field);

}  // namespace cityprobe::csv
