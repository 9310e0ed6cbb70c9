#pragma once

#include <cstdint>
#include <string_view>

namespace pplxprune {

// Stable 64-bit hash behind every randomized decision in the toolkit: split
// assignment, analysis subsampling and epoch shuffles. FNV-1a over the input
// bytes, seeded with (seed ^ golden gamma), followed by the splitmix64
// finalizer for avalanche. The exact bit pattern is part of the on-disk
// contract (split manifests record only the seed), so it is pinned by
// known-answer vectors in the tests and must never change.
constexpr uint64_t hash64(uint64_t seed, std::string_view bytes) noexcept {
    uint64_t h = seed ^ 0x9E3779B97F4A7C15ull;
    for (char c : bytes) {
        h = (h ^ static_cast<unsigned char>(c)) * 0x100000001B3ull;
    }
    h ^= h >> 30;
    h *= 0xBF58476D1CE4E5B9ull;
    h ^= h >> 27;
    h *= 0x94D049BB133111EBull;
    h ^= h >> 31;
    return h;
}

// Maps a hash to [0, 1). Exact: the uint64 -> double conversion rounds once
// and the 2^-64 scale is a power of two.
constexpr double hash_unit(uint64_t h) noexcept {
    return static_cast<double>(h) * 0x1p-64;
}

// The shared membership rule: an id is inside a `fraction`-sized subset iff
// its hashed unit value falls below the fraction. Fraction 1 admits every id
// unconditionally: hashes within 2^10 of 2^64 round to exactly 1.0 under the
// unit conversion and would otherwise be excluded.
inline bool hash_below(uint64_t seed, std::string_view id, double fraction) noexcept {
    return fraction >= 1.0 || hash_unit(hash64(seed, id)) < fraction;
}

// Purpose-derived seeds, so a single global seed drives independent
// randomized decisions without correlation between them.
inline uint64_t derive_seed(uint64_t global_seed, std::string_view purpose) noexcept {
    return hash64(global_seed, purpose);
}

} // namespace pplxprune
