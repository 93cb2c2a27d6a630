#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "nacu/data.hpp"

namespace nacu {

enum class SyntheticKind { linear, sinusoidal, quadratic };

SyntheticKind parse_synthetic_kind(std::string_view name);
std::string_view to_string(SyntheticKind kind) noexcept;

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::linear;
  std::size_t rows = 2000;
  std::size_t features = 8;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
};

/// Seeded regression task with features ~ Normal(0, 1):
///   linear      y = sum_j w_j x_j + e,  w_j ~ Normal(0, 1)
///   sinusoidal  y = sum_j sin(x_j) + e
///   quadratic   y = sum_j x_j^2 + e
/// with e ~ Normal(0, noise_std).
Dataset make_synthetic(const SyntheticSpec& spec);

}  // namespace nacu
