#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace wzsim {

// splitmix64 finalizer, used both for seeding and for deriving
// independent per-trial seeds from (master seed, row, replication).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
    return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

/// Deterministic random stream. A trial owns exactly one Rng; the call
/// sequence is part of the reproducibility contract, so model code must
/// consume draws in a fixed order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    std::uint64_t raw() { return gen_(); }

    // [0, 1)
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // One Box-Muller value per call. The sine partner is discarded so
    // every call consumes exactly two uniforms.
    double normal(double mean, double sd) {
        const double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(2.0 * M_PI * u2);
    }

    // Inter-arrival time of a Poisson process with the given rate (1/s).
    double exponential(double rate) {
        return -std::log(1.0 - uniform01()) / rate;
    }

private:
    std::mt19937_64 gen_;
};

/// Draw from a normal(mean, sd) restricted to [lo, hi] by rejection from
/// the parent distribution. After 10^4 rejected draws the parent sample is
/// clamped instead. sd == 0 degenerates to clamp(mean, lo, hi).
inline double sample_truncated_normal(double mean, double sd, double lo, double hi, Rng& rng) {
    if (!(lo < hi)) {
        throw std::invalid_argument("truncated normal: lo must be < hi");
    }
    if (sd < 0.0) {
        throw std::invalid_argument("truncated normal: sd must be >= 0");
    }
    if (sd == 0.0) {
        return std::clamp(mean, lo, hi);
    }
    constexpr int kMaxResamples = 10000;
    double x = mean;
    for (int i = 0; i < kMaxResamples; ++i) {
        x = rng.normal(mean, sd);
        if (x >= lo && x <= hi) {
            return x;
        }
    }
    return std::clamp(x, lo, hi);
}

struct TruncNormalSpec {
    double mean = 0.0;
    double sd = 0.0;
    double lo = 0.0;
    double hi = 1.0;

    double sample(Rng& rng) const { return sample_truncated_normal(mean, sd, lo, hi, rng); }
};

}  // namespace wzsim
