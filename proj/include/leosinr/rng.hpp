#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>
#include <vector>

#include "leosinr/common.hpp"

namespace leosinr {

// Seeded generator with fully specified sampling routines. The standard
// library distributions are implementation-defined, so every draw here is
// spelled out to keep runs byte-reproducible across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // splitmix64 warm-up so that small seeds diverge immediately
        next_u64();
        next_u64();
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in {lo, ..., hi} inclusive, rejection sampled.
    uint64_t uniform_int(uint64_t lo, uint64_t hi) {
        const uint64_t span = hi - lo + 1;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + x % span;
    }

    /// Standard normal via Box-Muller, spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Fisher-Yates partial shuffle: first k entries of a random permutation of {0..n-1}.
    std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i;
        for (size_t i = 0; i < k; ++i) {
            const size_t j = i + static_cast<size_t>(uniform_int(0, n - 1 - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Domain-separated child seed from (base seed, purpose tag, index).
/// Distinct tags give disjoint streams regardless of call order.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag bytes
    for (const char c : tag) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    // splitmix-style avalanche over (base, tag hash, index)
    uint64_t z = base + 0x9e3779b97f4a7c15ULL * (h ^ (index + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace leosinr
