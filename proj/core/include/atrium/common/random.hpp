#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace atrium {

/// Seeded Fisher-Yates permutation of [0, n). Written against mt19937_64
/// directly so the result does not depend on the standard library's
/// distribution implementations.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// Derives an independent stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace atrium
