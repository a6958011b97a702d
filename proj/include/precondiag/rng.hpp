#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace precondiag {

// splitmix64 (Steele, Lea, Flood 2014). Constants: increment 0x9e3779b97f4a7c15,
// mixers 0xbf58476d1ce4e5b9 and 0x94d049bb133111eb. Used for seeding and for
// the seed fan-out hash so every stream is reproducible from one root seed.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// FNV-1a 64-bit, for hashing purpose tags into the fan-out.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// hash(seed, index, purpose): derives independent sub-streams so adding a
// consumer (e.g. a diagnostic) never perturbs an existing stream.
inline std::uint64_t seed_fanout(std::uint64_t seed, std::uint64_t index, std::string_view purpose) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64_next(s);
    s = a ^ index;
    std::uint64_t b = splitmix64_next(s);
    s = b ^ fnv1a64(purpose);
    return splitmix64_next(s);
}

// xoshiro256++ (Blackman, Vigna 2019). State seeded via splitmix64 so any
// 64-bit seed, including 0, yields a valid nonzero state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        for (auto& word : state_) word = splitmix64_next(seed);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the second sample of each pair is cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        cached_ = radius * std::sin(angle);
        have_cached_ = true;
        return radius * std::cos(angle);
    }

    // Uniform in [0, n) via 128-bit multiply (Lemire reduction, no rejection).
    std::int64_t below(std::int64_t n) {
        return static_cast<std::int64_t>(
            static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) *
                                        static_cast<unsigned __int128>(n)) >>
                                       64));
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace precondiag
