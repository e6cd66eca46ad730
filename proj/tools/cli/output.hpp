#pragma once

// Locale-independent serialization and atomic file output.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bsp::cli {

/// Shortest decimal form that reads back to the same double; "nan", "inf",
/// "-inf" for non-finite values.
std::string format_double(double v);

/// RFC-4180 table: CRLF line ends, fields quoted only when they contain a
/// comma, quote, or line break.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& row();
  CsvTable& add(double v);
  CsvTable& add(std::uint64_t v);
  CsvTable& add(std::string_view v);

  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Writes `content` to a temporary file in the same directory and renames it
/// over `path`, so readers never see a partial file.
void write_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace bsp::cli
