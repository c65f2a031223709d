#pragma once

#include <cmath>
#include <cstdint>

namespace ovkrff::rng {

// Counter-based random numbers built on the SplitMix64 finalizer.
// Every draw is a pure function of (seed, stream, slot), so sampling is
// reproducible bit-for-bit no matter how the work is chunked across
// threads: chunk c of a parallel run reads exactly the slots the serial
// run would.

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Fold a stream identifier into a seed, producing an independent substream key.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream) {
    return mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

inline std::uint64_t bits_at(std::uint64_t key, std::uint64_t slot) {
    return mix64(key + slot * 0x9E3779B97F4A7C15ULL);
}

/// Uniform double in [0,1), 53-bit resolution.
inline double uniform_at(std::uint64_t key, std::uint64_t slot) {
    return static_cast<double>(bits_at(key, slot) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller; consumes slots 2*slot and 2*slot+1.
inline double normal_at(std::uint64_t key, std::uint64_t slot) {
    // u1 in (0,1] so the log is finite.
    const double u1 =
        (static_cast<double>(bits_at(key, 2 * slot) >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform_at(key, 2 * slot + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

} // namespace ovkrff::rng
