#pragma once

#include <cmath>
#include <cstdint>

namespace memseeker {

// Counter-based generator: every draw is a pure function of (key, counter),
// so independent streams can be derived by hashing labels into fresh keys.
struct CounterRng {
    uint64_t key = 0;
    uint64_t counter = 0;

    explicit CounterRng(uint64_t seed = 0) : key(mix64(seed + 0x9e3779b97f4a7c15ULL)) {}
    CounterRng(uint64_t key_, uint64_t counter_) : key(key_), counter(counter_) {}

    static uint64_t mix64(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t hash2(uint64_t a, uint64_t b) {
        return mix64(a + 0x9e3779b97f4a7c15ULL * mix64(b + 0x632be59bd9b4e019ULL));
    }

    // Independent substream; does not advance this generator.
    CounterRng child(uint64_t label) const { return CounterRng(hash2(key, label), 0); }

    uint64_t next_u64() { return hash2(key, counter++); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); n > 0.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    int64_t range(int64_t lo, int64_t hi) {  // inclusive bounds
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    double normal() {
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Normal clipped to two sigma by resampling.
    double trunc_normal(double sigma) {
        for (;;) {
            double z = normal();
            if (z >= -2.0 && z <= 2.0) return z * sigma;
        }
    }
};

}  // namespace memseeker
