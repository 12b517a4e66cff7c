#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cxr/common/error.hpp"

namespace cxr::csv {

struct Row {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

// RFC 4180: comma separated, optional double-quoted fields with "" escapes,
// CRLF or LF record ends. Blank lines are skipped.
inline std::vector<Row> parse(std::istream& is, const std::string& source = "<csv>") {
  std::vector<Row> rows;
  std::string field;
  Row row;
  std::size_t line = 1;
  bool in_quotes = false, quoted = false, any = false;
  row.line = 1;
  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    quoted = false;
  };
  auto end_row = [&] {
    if (any || !row.fields.empty()) {
      end_field();
      rows.push_back(std::move(row));
    }
    row = Row{};
    row.line = line;
    any = false;
  };
  char c;
  while (is.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (is.peek() == '"') {
          is.get(c);
          field.push_back('"');
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
        if (!field.empty() || quoted)
          throw ParseError(source + ":" + std::to_string(line) + ": stray quote inside field");
        in_quotes = quoted = any = true;
        break;
      case ',':
        any = true;
        end_field();
        break;
      case '\r':
        if (is.peek() != '\n') throw ParseError(source + ":" + std::to_string(line) + ": bare carriage return");
        break;
      case '\n':
        ++line;
        end_row();
        break;
      default:
        if (quoted) throw ParseError(source + ":" + std::to_string(line) + ": text after closing quote");
        any = true;
        field.push_back(c);
    }
  }
  if (in_quotes) throw ParseError(source + ":" + std::to_string(row.line) + ": unterminated quoted field");
  end_row();
  return rows;
}

inline std::vector<Row> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return parse(is, path);
}

inline std::string quote(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << quote(fields[i]);
  }
  os << "\r\n";
}

// Shortest decimal text that reads back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw NumericError("format_double failed");
  return std::string(buf, end);
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && e[-1] == ' ') --e;
  if (b < e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e || b == e) throw ParseError(what + ": '" + s + "' is not a number");
  return v;
}

// Checks a header row exactly against the expected column names.
inline void expect_header(const std::vector<Row>& rows, const std::vector<std::string>& cols,
                          const std::string& source) {
  if (rows.empty()) throw ParseError(source + ": missing header");
  if (rows[0].fields != cols) {
    std::string want;
    for (const auto& c : cols) want += (want.empty() ? "" : ",") + c;
    throw ParseError(source + ":1: expected header '" + want + "'");
  }
}

}  // namespace cxr::csv
