#include "hte/csv.hpp"

#include <fstream>
#include <sstream>

#include "hte/error.hpp"

namespace hte::csv {

Table parse(std::string_view text) {
  Table table;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    if (table.header.empty()) {
      table.header = std::move(record);
    } else if (!(record.size() == 1 && record[0].empty())) {
      if (record.size() != table.header.size()) {
        fail(ErrorCode::kParseError,
             "line " + std::to_string(line) + ": expected " +
                 std::to_string(table.header.size()) + " fields, found " +
                 std::to_string(record.size()));
      }
      table.rows.push_back(std::move(record));
    }
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          fail(ErrorCode::kParseError,
               "line " + std::to_string(line) + ": stray quote inside field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) fail(ErrorCode::kParseError, "unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  if (table.header.empty()) fail(ErrorCode::kParseError, "missing header row");
  return table;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

Table read(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_row(std::span<const std::string> fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) line.push_back(',');
    line += escape(fields[i]);
  }
  line.push_back('\n');
  return line;
}

}  // namespace hte::csv
