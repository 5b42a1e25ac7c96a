#pragma once

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace dqt {

using Engine = std::mt19937_64;

// splitmix64 finaliser
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Order-sensitive hash of a list of 64-bit words. Used to derive independent
/// per-(point, realization, trajectory) seeds from one master seed.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t h = 0x6A09E667F3BCC909ULL;
    for (auto w : words) h = mix64(h ^ mix64(w));
    return h;
}

/// Bit pattern of a double, with -0.0 folded onto +0.0 so that equal rates
/// always hash identically.
inline std::uint64_t value_key(double v) noexcept {
    if (v == 0.0) v = 0.0;
    return std::bit_cast<std::uint64_t>(v);
}

inline Engine make_engine(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Engine(seq);
}

// Stream tags keep disorder and trajectory seeds in separate families.
inline constexpr std::uint64_t kDisorderStream = 0xD150'4DE4ULL;
inline constexpr std::uint64_t kTrajectoryStream = 0x7A45'EC70ULL;

} // namespace dqt
