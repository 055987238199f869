#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace oaprog {

/// splitmix64 finalizer; the mixing primitive behind all seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

/// Named sub-seed derivation: every random stream in the pipeline is keyed
/// by (master seed, purpose tag, indices), so reruns are reproducible and
/// parallel schedules cannot change results.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    return mix64(master ^ hash_tag(tag));
}

template <typename... Ix>
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, Ix... indices) {
    std::uint64_t h = derive_seed(master, tag);
    ((h = mix64(h ^ static_cast<std::uint64_t>(indices))), ...);
    return h;
}

/// mt19937_64 wrapper with explicit bounded/unit draws.  The standard
/// specifies the engine exactly but not the distributions, so we provide
/// our own to keep results identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n) by rejection; n must be > 0.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(bounded(n)); }

    /// Uniform double in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace oaprog
