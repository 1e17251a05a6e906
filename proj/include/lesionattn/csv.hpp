#pragma once

// Minimal RFC 4180 CSV reading/writing (quoted fields, embedded commas and
// quotes). Header row required.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lesionattn::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] bool has_column(std::string_view name) const;
  [[nodiscard]] std::size_t column(std::string_view name) const;
  [[nodiscard]] const std::string& get(std::size_t row, std::string_view name) const;
};

Table parse(std::string_view text);
Table read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Table& table);
std::string to_string(const Table& table);

/// Shortest text that round-trips to the same double.
std::string format_double(double v);

}  // namespace lesionattn::csv
