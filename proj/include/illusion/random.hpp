#pragma once

#include <cstdint>
#include <random>

namespace illusion {

/// Seeded engine whose output sequence is fixed by the C++ standard.
using Rng = std::mt19937_64;

/// Uniform integer in [0, n) by rejection on raw engine output.
/// std::uniform_int_distribution is implementation-defined, so results would
/// differ between standard libraries.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace illusion
