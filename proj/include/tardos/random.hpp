#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

namespace tardos {

/// Engine used for every stochastic component.
///
/// Streams are never shared between purposes. A stream seed is derived from
/// the master seed, a purpose tag and an index:
///
///     seed = splitmix64(splitmix64(master ^ fnv1a(tag)) + index)
///
/// so trial k of an experiment draws from the same stream no matter which
/// worker runs it or in which order trials are scheduled.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                    std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(master ^ fnv1a64(tag)) + index);
}

inline Rng make_rng(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
    return Rng{derive_seed(master, tag, index)};
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Draws an index with probabilities given by `weights` (summing to one).
template <typename Range>
std::size_t draw_categorical(Rng& rng, const Range& weights) {
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t last = 0;
    std::size_t k = 0;
    for (double w : weights) {
        acc += w;
        if (u < acc) return k;
        if (w > 0.0) last = k;
        ++k;
    }
    return last;
}

/// k distinct indices from [0, n), in sampling order.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n,
                                                           std::size_t k) {
    // partial Fisher-Yates
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + uniform_index(rng, n - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

inline std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
    return sample_without_replacement(rng, n, n);
}

}  // namespace tardos
