#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace spikedec {

// Deterministic random source. std::mt19937_64 itself is fully specified by
// the standard, but the distribution classes are not, so every transform is
// spelled out here to keep generated streams identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Derives an independent stream from (seed, stream_id) via splitmix64.
    static Rng derive(std::uint64_t seed, std::uint64_t stream_id) {
        return Rng(splitmix64(seed + 0x9E3779B97F4A7C15ULL * (stream_id + 1)));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64 and
    // the mapping is identical everywhere.
    std::uint64_t uniform_int(std::uint64_t n) { return engine_() % n; }

    // Standard normal via Box-Muller (no state cached, one sample per call).
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Poisson sample. Knuth's product method for small rates, normal
    // approximation (rounded, clamped at 0) for large ones.
    std::uint64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda < 30.0) {
            const double limit = std::exp(-lambda);
            double prod = uniform01();
            std::uint64_t k = 0;
            while (prod > limit) {
                ++k;
                prod *= uniform01();
            }
            return k;
        }
        const double x = lambda + std::sqrt(lambda) * normal();
        return x <= 0.0 ? 0 : static_cast<std::uint64_t>(std::llround(x));
    }

    double lognormal(double sigma) { return std::exp(sigma * normal()); }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace spikedec
