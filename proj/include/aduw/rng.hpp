#pragma once

#include <cstdint>
#include <cmath>

namespace aduw {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// PCG32: fixed algorithm so streams are identical on every platform,
// unlike std::mt19937 + std distributions.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += splitmix64(seed);
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    // uniform in [0,1)
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_u32() % static_cast<uint32_t>(hi - lo + 1));
    }

    // Box-Muller, one value per call (the pair's partner is discarded to keep
    // the stream position independent of call parity).
    double normal(double mean = 0.0, double sd = 1.0) {
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 1e-12);
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + sd * z;
    }

    float normal_f(float mean = 0.0f, float sd = 1.0f) {
        return static_cast<float>(normal(mean, sd));
    }

private:
    uint64_t state_;
    uint64_t inc_;
};

}  // namespace aduw
