// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/error.hpp"

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace artinerf {

/// The engine output sequence is fixed by the standard, unlike the
/// std distributions, so every draw goes through the helpers below.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng &rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng &rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng &rng, std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

inline std::string serialize_rng(const Rng &rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

inline void deserialize_rng(const std::string &text, Rng &rng) {
    std::istringstream is(text);
    is >> rng;
    if (!is) {
        throw DataError("", "rng", "malformed generator state");
    }
}

} // namespace artinerf
