#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mfa {

using Rng = std::mt19937_64;

// Derives an independent child seed from a parent seed and a tag, so one
// top-level seed can drive every module without correlated streams.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace mfa
