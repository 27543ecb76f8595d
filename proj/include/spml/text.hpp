#pragma once

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "spml/error.hpp"

namespace spml {

// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(std::string_view tok, const std::string& source, std::size_t line) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError(source, line, "invalid number '" + std::string(tok) + "'");
  }
  return v;
}

inline long parse_long(std::string_view tok, const std::string& source, std::size_t line) {
  long v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError(source, line, "invalid integer '" + std::string(tok) + "'");
  }
  return v;
}

// "<magic> v1 KEY=value KEY=value ..."
struct Header {
  std::map<std::string, std::string, std::less<>> fields;
  std::string source;
  std::size_t line = 1;

  const std::string& require(std::string_view key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw ParseError(source, line, "header is missing " + std::string(key));
    return it->second;
  }
  long require_int(std::string_view key) const { return parse_long(require(key), source, line); }
};

inline Header parse_header(const std::string& text, std::string_view magic, const std::string& source,
                           std::size_t line) {
  std::istringstream is(text);
  std::string tok;
  if (!(is >> tok) || tok != magic) {
    throw ParseError(source, line, "expected header starting with '" + std::string(magic) + "'");
  }
  if (!(is >> tok) || tok != "v1") throw ParseError(source, line, "unsupported format version");
  Header h;
  h.source = source;
  h.line = line;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParseError(source, line, "malformed header field '" + tok + "'");
    }
    h.fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return h;
}

}  // namespace spml
