#pragma once

#include <cmath>
#include <cstdint>

namespace bnet {

/// Finalizing mixer used throughout the RNG machinery (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

/// Derives an independent stream key from a master key plus up to two
/// coordinates (a tag and an index). Streams derived with distinct
/// coordinates are statistically independent, so work items may be
/// distributed over any number of threads without changing results.
constexpr std::uint64_t derive_key(std::uint64_t key,
                                   std::uint64_t a,
                                   std::uint64_t b = 0) noexcept {
    std::uint64_t h = mix64(key ^ 0x6a09e667f3bcc909ULL);
    h = mix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
    h = mix64(h ^ (b + 0xbb67ae8584caa73bULL));
    return h;
}

/// Counter-based generator: draw k of stream `key` is a pure function of
/// (key, k). Cheap to construct, trivially reproducible, no warm-up.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    std::uint64_t next_u64() noexcept {
        counter_ += 0x9e3779b97f4a7c15ULL;
        return mix64(counter_ + key_);
    }

    // uniform_random_bit_generator interface
    result_type operator()() noexcept { return next_u64(); }
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~std::uint64_t{0}; }

    /// Uniform double in [0, 1).
    double uniform01() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in (0, 1); safe as a log() argument.
    double uniform_open() noexcept {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    /// Uniform integer in [0, bound). Multiply-shift map; bound >= 1.
    std::uint64_t uniform_below(std::uint64_t bound) noexcept {
        const unsigned __int128 m =
            static_cast<unsigned __int128>(next_u64()) * bound;
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) noexcept { return uniform01() < p; }

    /// Standard normal via Box-Muller (cosine branch only).
    double normal() noexcept {
        const double u1 = uniform_open();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang squeeze; shape > 0.
    double gamma(double shape) noexcept {
        if (shape < 1.0) {
            const double u = uniform_open();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / (3.0 * std::sqrt(d));
        for (;;) {
            const double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform_open();
            const double x2 = x * x;
            if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
            if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Beta(a, b) via two gamma draws.
    double beta(double a, double b) noexcept {
        const double x = gamma(a);
        const double y = gamma(b);
        const double s = x + y;
        if (s <= 0.0) return a / (a + b); // both draws underflowed
        return x / s;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace bnet
