#pragma once

// Small helpers shared by the text file formats.

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "phnn/error.hpp"

namespace phnn::io {

/// 17 significant digits: every double reads back bit for bit.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Shortest of %.15g, %.16g, %.17g that reads back to the same double.
inline std::string fmt_short(double v) {
  char buf[32];
  for (int digits = 15; digits < 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return fmt(v);
}

inline double parse_double(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') fail(ErrorKind::io, where + ": expected a number, got '" + s + "'");
  return v;
}

inline long parse_int(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const long v = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0') fail(ErrorKind::io, where + ": expected an integer, got '" + s + "'");
  return v;
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0' || s[0] == '-' || errno == ERANGE)
    fail(ErrorKind::io, where + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep = ' ') {
  std::vector<std::string> out;
  if (sep == ' ') {
    std::istringstream is(line);
    for (std::string tok; is >> tok;) out.push_back(tok);
    return out;
  }
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open '" + path + "' for reading");
  return f;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  return f;
}

/// Reads whitespace-separated tokens with line-independent positioning.
class TokenReader {
 public:
  TokenReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::string word() {
    std::string tok;
    if (!(in_ >> tok)) fail(ErrorKind::io, source_ + ": unexpected end of file");
    return tok;
  }
  void expect(const std::string& key) {
    const std::string tok = word();
    if (tok != key) fail(ErrorKind::io, source_ + ": expected '" + key + "', got '" + tok + "'");
  }
  double number() { return parse_double(word(), source_); }
  long integer() { return parse_int(word(), source_); }

 private:
  std::istream& in_;
  std::string source_;
};

}  // namespace phnn::io
