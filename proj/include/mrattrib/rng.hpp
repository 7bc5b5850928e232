#pragma once

#include <cmath>
#include <cstdint>

#include "mrattrib/common.hpp"

namespace mrattrib {

// PCG32: 64-bit state, 64-bit stream selector. Substreams are derived from
// (seed, tag, index) hashes, so parallel consumers draw from disjoint streams
// and results do not depend on scheduling.
class Pcg32 {
public:
    Pcg32(uint64_t seed, uint64_t stream) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

private:
    uint64_t state_;
    uint64_t inc_;
};

class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) : gen_(seed, stream) {}

    static uint64_t substream(uint64_t seed, uint64_t tag, uint64_t index = 0) {
        return hash_combine(hash_combine(mix_u64(seed), tag), index);
    }

    uint64_t next_u64() {
        uint64_t hi = gen_.next_u32();
        return (hi << 32) | gen_.next_u32();
    }

    // Strictly inside (0,1); 53-bit resolution.
    double uniform() {
        uint64_t r = next_u64() >> 11;
        return (static_cast<double>(r) + 0.5) * 0x1.0p-53;
    }

    // Box-Muller, cosine branch only (no cached spare, keeps the draw count
    // per call fixed).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential() { return -std::log(uniform()); }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw InputError("uniform_int: n must be positive");
        uint64_t threshold = (~n + 1) % n;  // rejection bound for unbiased draw
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

private:
    Pcg32 gen_;
};

}  // namespace mrattrib
