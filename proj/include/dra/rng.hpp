#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dra {

// All randomness in the library flows through seeded mt19937_64 engines with
// hand-rolled draw helpers, so results are reproducible across platforms and
// standard-library versions.
using Rng = std::mt19937_64;

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Named substream: independent engines for batching, init, priors, etc.
inline Rng make_stream(std::uint64_t root_seed, std::string_view name) {
    return Rng(splitmix64(root_seed ^ fnv1a64(name)));
}

inline double uniform_real(Rng& rng, double lo = 0.0, double hi = 1.0) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53; // in [0,1)
    return lo + u * (hi - lo);
}

// Uniform integer in [lo, hi], inclusive. Rejection keeps it unbiased.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(rng()); // full 64-bit range
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % range);
}

// Box-Muller, one value per call (the sibling draw is discarded so streams
// stay position-independent).
inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    double u1;
    do {
        u1 = uniform_real(rng);
    } while (u1 <= 0.0);
    double u2 = uniform_real(rng);
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + stddev * z;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace dra
