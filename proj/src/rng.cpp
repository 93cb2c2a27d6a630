#include "nacu/rng.hpp"

#include "nacu/error.hpp"

namespace nacu {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::parse_error: return "parse_error";
    case ErrorKind::io_error: return "io_error";
    case ErrorKind::non_finite: return "non_finite";
    case ErrorKind::training_diverged: return "training_diverged";
    case ErrorKind::factorization_failed: return "factorization_failed";
    case ErrorKind::undefined_correlation: return "undefined_correlation";
  }
  return "unknown";
}

std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(parent) ^ (stream * 0xd1b54a32d192ed03ULL + 1));
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept {
  // FNV-1a over the tag
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(parent, h);
}

}  // namespace nacu
