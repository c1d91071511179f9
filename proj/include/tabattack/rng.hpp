#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tabattack {

// SplitMix64 finalizer, used to mix seeds and derive independent streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Derives a child seed from a base seed and one or more stream ids.
/// Used so that per-fold / per-instance randomness is independent of
/// scheduling order.
template <typename... Ids>
std::uint64_t derive_seed(std::uint64_t base, Ids... ids) {
    std::uint64_t h = splitmix64(base);
    ((h = splitmix64(h ^ splitmix64(static_cast<std::uint64_t>(ids)))), ...);
    return h;
}

/// Deterministic random source. The mt19937_64 engine is fully specified
/// by the standard; the distribution helpers below are hand-rolled because
/// std::uniform_real_distribution et al. are implementation-defined and
/// would break the bit-determinism contract across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [0, 1] (closed; used where the convex-combination
    /// contract allows both endpoints).
    double uniform_closed() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53 * (9007199254740992.0 / 9007199254740991.0);
    }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller, caching the second deviate.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(t);
        has_cached_ = true;
        return r * std::cos(t);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct indices drawn from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k && !pool.empty(); ++i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(pool.size()));
            out.push_back(pool[j]);
            pool[j] = pool.back();
            pool.pop_back();
        }
        return out;
    }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace tabattack
