#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hte::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// RFC 4180 parsing: comma separated, double-quote quoting with "" escapes,
/// LF or CRLF line endings. The first record is the header. Every record
/// must have the header's field count.
Table parse(std::string_view text);
Table read(const std::filesystem::path& path);

std::string escape(std::string_view field);
std::string format_row(std::span<const std::string> fields);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace hte::csv
