#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nacu {

enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  parse_error,
  io_error,
  non_finite,
  training_diverged,
  factorization_failed,
  undefined_correlation,
};

// Stable identifier used in machine-readable error output.
std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace nacu
