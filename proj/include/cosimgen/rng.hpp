#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace cosimgen {

// Deterministic PRNG (xoshiro256++). Self-contained so that streams are
// bit-identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        // splitmix64 expansion of the seed into the state
        uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9e3779b97f4a7c15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            s = z ^ (z >> 31);
        }
        gauss_cached_ = false;
        gauss_cache_ = 0.0;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
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

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; second draw cached.
    double normal() {
        if (gauss_cached_) {
            gauss_cached_ = false;
            return gauss_cache_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        gauss_cache_ = r * std::sin(a);
        gauss_cached_ = true;
        return r * std::cos(a);
    }

private:
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    uint64_t state_[4];
    bool gauss_cached_;
    double gauss_cache_;
};

// FNV-1a, used for hashed text features and for deriving named sub-seeds.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Stable sub-seed for a named stream, so adding streams does not shift others.
inline uint64_t derive_seed(uint64_t seed, std::string_view label) {
    uint64_t h = fnv1a64(label);
    h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

inline Rng rng_for(uint64_t seed, std::string_view label) { return Rng(derive_seed(seed, label)); }

} // namespace cosimgen
