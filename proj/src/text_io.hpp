#pragma once

// Token-level helpers shared by the plain-text model/calibration formats.
// Doubles are written as C99 hex floats so a save/load cycle is exact.

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

#include "nacu/error.hpp"

namespace nacu::text_io {

inline std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline std::string decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Reader {
 public:
  Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  std::string token() {
    std::string t;
    if (!(in_ >> t)) fail(ErrorKind::parse_error, what_ + ": unexpected end of file");
    return t;
  }

  void expect(const std::string& keyword) {
    const auto t = token();
    if (t != keyword) fail(ErrorKind::parse_error, what_ + ": expected '" + keyword + "', got '" + t + "'");
  }

  double real() {
    const auto t = token();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || errno == ERANGE) {
      fail(ErrorKind::parse_error, what_ + ": bad number '" + t + "'");
    }
    return v;
  }

  std::uint64_t u64() {
    const auto t = token();
    char* end = nullptr;
    errno = 0;
    const auto v = std::strtoull(t.c_str(), &end, 10);
    if (t.empty() || t[0] == '-' || end != t.c_str() + t.size() || errno == ERANGE) {
      fail(ErrorKind::parse_error, what_ + ": bad integer '" + t + "'");
    }
    return v;
  }

 private:
  std::istream& in_;
  std::string what_;
};

}  // namespace nacu::text_io
