#pragma once

#include <cstdint>

namespace wr {

/// SplitMix64 (Steele, Lea & Flood). Used to expand seeds and as a
/// counter-based hash for per-frame noise.
constexpr std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t value) {
    std::uint64_t s = value;
    return splitmix64(s);
}

/// 53-bit uniform in [0, 1). Exact on every IEEE-754 platform.
constexpr double to_unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// xoshiro256** 1.0 (Blackman & Vigna), state seeded from SplitMix64.
/// Level generation is pinned to this exact sequence so a seed reproduces
/// the same level on any platform.
class Xoshiro256 {
public:
    explicit constexpr Xoshiro256(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64(sm);
    }

    constexpr std::uint64_t next() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    constexpr double uniform() { return to_unit_double(next()); }

    /// Uniform in [lo, hi]; returns lo when the interval is empty.
    constexpr double uniform(double lo, double hi) { return hi > lo ? lo + uniform() * (hi - lo) : lo; }

    /// Uniform integer in [0, n); n must be > 0. Multiply-shift, no modulo bias
    /// worth caring about for n << 2^32.
    constexpr std::uint64_t below(std::uint64_t n) { return (next() >> 32) * n >> 32; }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
};

}  // namespace wr
