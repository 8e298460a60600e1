#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace sspe {

// splitmix64 finalizer, used both as a mixer and for deriving per-sample seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t seed_hash(std::uint64_t a) { return mix64(a); }

template <typename... Rest>
std::uint64_t seed_hash(std::uint64_t a, std::uint64_t b, Rest... rest) {
    return seed_hash(mix64(a) ^ (mix64(b) + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)), rest...);
}

// FNV-1a over a byte-free integer stream; used for plan hashes in training logs.
struct StreamHash {
    std::uint64_t h = 1469598103934665603ull;
    void update(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffu;
            h *= 1099511628211ull;
        }
    }
};

// Deterministic generator: the mt19937_64 stream is pinned by the standard and
// all distribution draws below are hand-rolled, so identical seeds reproduce
// identical draw sequences on any platform.
struct Rng {
    std::mt19937_64 engine;

    explicit Rng(std::uint64_t seed) : engine(seed) {}

    std::uint64_t next_u64() { return engine(); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive [lo, hi], unbiased via rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1u;
        if (span == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit range
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return lo + static_cast<std::int64_t>(v % span);
    }

    // Box-Muller, cos branch only; two uniform draws per call.
    double gauss(double mean = 0.0, double sd = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from [lo, hi] excluding `excluded`, order random.
    std::vector<std::int64_t> sample_without_replacement(std::int64_t lo, std::int64_t hi,
                                                         std::size_t k, std::int64_t excluded) {
        std::vector<std::int64_t> pool;
        pool.reserve(static_cast<std::size_t>(hi - lo + 1));
        for (std::int64_t v = lo; v <= hi; ++v)
            if (v != excluded) pool.push_back(v);
        if (k > pool.size()) throw std::invalid_argument("sample_without_replacement: k too large");
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(pool.size() - i) - 1));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }
};

}  // namespace sspe
