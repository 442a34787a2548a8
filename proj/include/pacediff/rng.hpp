#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace pacediff {

// splitmix64 finalizer; used to derive well-separated seeds from small integers.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Seed for an independent stream identified by (base seed, task id).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t task) {
    return mix64(mix64(base) ^ mix64(task + 0x7f4a7c15u));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    return derive_seed(base, fnv1a64(tag));
}

// mt19937_64 with hand-rolled uniform/normal transforms so every byte of the
// stream is pinned by this file rather than by the standard library's
// unspecified distribution algorithms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t u64() { return engine_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x < threshold);
        return x % n;
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

    // Standard normal via Box-Muller; the second deviate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // 1 - U keeps the argument of log in (0, 1].
        const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
        const double theta = 6.283185307179586476925286766559 * uniform();
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(std::span<double> out) {
        for (double& v : out) v = normal();
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace pacediff
