#pragma once

#include <cstdint>

namespace alignsim {

// All randomness in the project flows through this generator so that runs are
// reproducible from a single seed and ports in other languages can match the
// integer draws bit for bit.
//
// Algorithm: splitmix64. State advances by the 64-bit golden-gamma constant;
// output is the finalizer
//   z ^= z >> 30; z *= 0xbf58476d1ce4e5b9;
//   z ^= z >> 27; z *= 0x94d049bb133111eb;
//   z ^= z >> 31;
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1): top 53 bits scaled by 2^-53.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
};

}  // namespace alignsim
