#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nacu {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent child seeds from a
/// parent seed so that every random consumer owns its own generator.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix_seed(seed)); }

}  // namespace nacu
