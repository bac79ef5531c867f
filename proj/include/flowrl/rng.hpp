#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace flowrl {

// Deterministic RNG with hand-rolled distributions. std::mt19937_64 is the
// engine, but uniform/normal draws avoid std::*_distribution so the exact
// stream is fixed by this file alone, not by the standard library build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Marsaglia polar; caches the second deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection sampling over the smallest covering power-of-two range.
        const std::uint64_t mask = mask_for(n);
        std::uint64_t x;
        do {
            x = engine_() & mask;
        } while (x >= n);
        return x;
    }

    // Child stream with a seed derived from (this seed's stream, label, index).
    // Used for per-rollout / per-episode seeding so results are independent of
    // execution order.
    static std::uint64_t derive(std::uint64_t root, std::uint64_t label, std::uint64_t index = 0) {
        return splitmix(splitmix(root ^ (0x9e3779b97f4a7c15ULL * (label + 1))) + index);
    }

private:
    static std::uint64_t mask_for(std::uint64_t n) {
        std::uint64_t m = n - 1;
        m |= m >> 1;
        m |= m >> 2;
        m |= m >> 4;
        m |= m >> 8;
        m |= m >> 16;
        m |= m >> 32;
        return m;
    }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace flowrl
