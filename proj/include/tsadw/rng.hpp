#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace tsadw::rng {

// SplitMix64 step. Fast, well-mixed, and identical on every platform we
// target, which keeps seeded runs byte-reproducible.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Mixes an arbitrary list of integers into one derived seed. Used to build
/// independent sub-streams, e.g. mix({seed, case_index, pmu, cycle}).
inline std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t s = 0x243f6a8885a308d3ULL;  // arbitrary nonzero start
    for (std::uint64_t p : parts) {
        s ^= p + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        std::uint64_t t = s;
        s = splitmix64(t);
    }
    return s;
}

/// Deterministic random stream. One instance per logical consumer; streams
/// derived with distinct mix() salts are independent for our purposes.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller (cos branch only, so one draw
    /// consumes exactly two uniforms).
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Gamma(shape k, scale theta) via Marsaglia-Tsang. Exact sampler.
    double gamma(double k, double theta) {
        if (k < 1.0) {
            // boost to k+1 then scale back
            const double u = uniform01();
            return gamma(k + 1.0, theta) * std::pow(u, 1.0 / k);
        }
        const double d = k - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * theta;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * theta;
        }
    }

    /// Fisher-Yates shuffle of an index-addressable container.
    template <typename Container>
    void shuffle(Container& c) {
        for (std::size_t i = c.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(c[i - 1], c[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace tsadw::rng
