#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>

namespace croplab {

/// Random engine used everywhere. mt19937_64's output sequence is fixed by
/// the standard, so seeded runs are reproducible across toolchains.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent child seed from a base seed and a path of indices
/// (e.g. {cell, trial}). Used to give every worker its own stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(base);
    for (auto p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

/// Uniform double in [0, 1) built from the top 53 bits of one engine draw.
/// std::uniform_real_distribution is implementation-defined, this is not.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Samples an index from a discrete distribution by inverse CDF.
/// Zero-probability entries are never returned.
inline std::size_t sample_index(std::span<const double> probs, Rng& rng) {
    if (probs.empty()) throw std::invalid_argument("sample_index: empty distribution");
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t last_positive = probs.size();
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last_positive = i;
        if (u < acc) return i;
    }
    // rounding left u just above the accumulated mass
    if (last_positive == probs.size()) throw std::invalid_argument("sample_index: no positive mass");
    return last_positive;
}

} // namespace croplab
