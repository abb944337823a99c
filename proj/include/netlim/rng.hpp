#pragma once

#include <cstdint>
#include <random>

namespace netlim {

using Rng = std::mt19937_64;

// Named substreams so that independent random inputs (weights, noise, ...)
// never share a seed even when derived from the same master seed.
enum class Stream : std::uint64_t {
    Weights = 1,
    Simulation = 2,
    InitialState = 3,
    MonteCarlo = 4,
    WindowSampling = 5,
    Trial = 6,
};

/// SplitMix64 finalizer; bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic per-trial seed: master seed -> (stream, index) substream.
/// derive_seed(m, s, i) == derive_seed(m, s', i') only if (s,i) == (s',i')
/// up to mixer collisions; streams and indices are mixed separately so
/// parallel trials get reproducible, non-overlapping generators.
inline std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
    std::uint64_t z = mix64(master ^ (static_cast<std::uint64_t>(stream) * 0xA0761D6478BD642FULL));
    return mix64(z ^ (index * 0xE7037ED1A0B428DBULL));
}

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
    return Rng(derive_seed(master, stream, index));
}

} // namespace netlim
