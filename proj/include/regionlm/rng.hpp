#pragma once

#include <cmath>
#include <cstdint>

namespace regionlm {

// Deterministic 64-bit LCG (Knuth MMIX constants). All randomized
// initialization in the project flows through this generator so that a seed
// fully determines every weight and fixture.
class Lcg {
public:
    explicit Lcg(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
        return state_;
    }

    // Uniform in [0, 1). Uses the top 53 bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 1e-300) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Integer in [0, n).
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t state_;
};

}  // namespace regionlm
