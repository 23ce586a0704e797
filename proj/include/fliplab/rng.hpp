#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fliplab {

using Rng = std::mt19937_64;

/// Deterministic generator for a named stage of a seeded run. Two calls with
/// the same (seed, stage) produce identical streams; different stages are
/// decorrelated through the seed sequence.
inline Rng stage_rng(std::uint64_t seed, std::string_view stage) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char c : stage) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

}  // namespace fliplab
