#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedsnt {

using Rng = std::mt19937_64;

// Sub-seeds are derived by keyed hashing of (seed, purpose, index) so that
// every random stream in a run hangs off a single user-facing seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view purpose,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(seed, purpose, index));
}

}  // namespace fedsnt
