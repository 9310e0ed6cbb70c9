#pragma once

#include <cmath>
#include <cstdint>

namespace pplxprune {

// Deterministic RNG for synthetic corpora and tests. splitmix64 stream with
// the same finalizer as hash64, so generated fixtures are reproducible across
// platforms and standard-library versions (std:: distributions are not).
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) noexcept : state_(seed) {}

    uint64_t next() noexcept {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n). Lemire multiply-shift reduction; the modulo bias is
    // below 2^-64 * n, irrelevant for test data.
    uint64_t next_below(uint64_t n) noexcept {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    double next_unit() noexcept { return static_cast<double>(next()) * 0x1p-64; }

    // Standard normal via Box-Muller; one spare value cached.
    double next_normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_unit();
        double u2 = next_unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace pplxprune
