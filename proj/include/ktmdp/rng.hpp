#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <random>
#include <span>

namespace ktmdp {

// Random streams are built on std::mt19937_64 (whose output sequence the
// standard pins down exactly) with hand-rolled distributions, so identical
// seeds give identical draws on every platform and standard library.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Mixes a base seed with up to three indices into a fresh stream seed.
/// Used to give every (start state, trial) rollout its own independent
/// stream so parallel evaluation order cannot change results.
inline std::uint64_t seed_mix(std::uint64_t base, std::uint64_t a = 0,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = base;
    s ^= splitmix64(a) + 0x9e3779b97f4a7c15ULL;
    std::uint64_t t = s;
    s = splitmix64(t);
    s ^= splitmix64(b) + 0x632be59bd9b4e019ULL;
    t = s;
    s = splitmix64(t);
    s ^= splitmix64(c) + 0xc2b2ae3d27d4eb4fULL;
    t = s;
    return splitmix64(t);
}

/// 64-bit digest of a sequence of doubles, for deriving deterministic
/// per-state reward-sampling streams.
inline std::uint64_t hash_doubles(std::span<const double> xs, std::uint64_t seed = 0) {
    std::uint64_t h = seed ^ 0x51'7c'c1'b7'27'22'0a'95ULL;
    for (double x : xs) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
        std::uint64_t t = h ^ bits;
        h = splitmix64(t);
    }
    return h;
}

/// Seedable random stream: uniform, normal, integer draws.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : eng_(seed) {}

    /// Uniform double in (0, 1]. Never returns 0, so log() is safe.
    double uniform01() {
        return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    /// Uniform integer in [0, n) without modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ktmdp
