#pragma once

// Plain-text I/O helpers: shortest round-trip number formatting and a small
// CSV reader that keeps 1-based line numbers for error reporting.

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "qstrong/errors.hpp"

namespace qstrong::io {

/// Shortest decimal representation that parses back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw IoError("number formatting failed");
  return std::string(buf, ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Strict double parse: the whole field must be consumed and the value finite.
inline bool try_parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

inline double parse_double(std::string_view s, const std::string& path, std::size_t line, const std::string& what) {
  double v = 0.0;
  if (!try_parse_double(s, v)) throw ParseError(path, line, "bad number '" + std::string(s) + "' in " + what);
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;           // source line of each row
  std::map<std::string, std::string> meta;  // from "# key=value" lines

  /// Column index by name, or -1.
  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("write to '" + path + "' failed");
}

/// Reads a comma separated file. Blank lines are skipped, lines starting with
/// '#' are comments ("# key=value" is recorded in meta). When `expect_header`
/// is set the first data line is taken as the header if it is not numeric.
inline CsvTable read_csv(const std::string& path, bool expect_header = true) {
  const std::string text = read_file(path);
  CsvTable t;
  std::size_t lineno = 0, pos = 0;
  bool header_done = !expect_header;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line = trim(std::string_view(text).substr(pos, nl - pos));
    pos = nl + 1;
    ++lineno;
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto body = trim(line.substr(1));
      auto eq = body.find('=');
      if (eq != std::string_view::npos) t.meta[std::string(trim(body.substr(0, eq)))] = std::string(trim(body.substr(eq + 1)));
      continue;
    }
    auto fields = split(line);
    if (!header_done) {
      header_done = true;
      double dummy;
      if (!try_parse_double(fields.front(), dummy)) {
        t.header = std::move(fields);
        continue;
      }
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  return t;
}

} // namespace qstrong::io
