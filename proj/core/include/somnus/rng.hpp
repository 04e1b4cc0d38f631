#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace somnus {

// Deterministic RNG used everywhere seeds matter. All draws go through the
// raw 64-bit stream of std::mt19937_64 (fully specified by the standard);
// std::*_distribution is avoided because its output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 bits of randomness.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is irrelevant at our scales.
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates; std::shuffle is not reproducible across stdlibs.
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Per-parameter seed so that adding or removing unrelated parameters does not
// shift anyone else's initialization stream.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view name) {
    std::uint64_t h = fnv1a64(name);
    h ^= global_seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

}  // namespace somnus
