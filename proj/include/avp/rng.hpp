#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "avp/hash.hpp"

namespace avp {

// Deterministic random source. One master seed per run; every randomized
// stage pulls a named sub-stream so reseeding one stage never perturbs the
// others. The engine (mt19937_64) and every distribution here are fully
// specified, so sequences are identical across platforms and toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : base_seed_(seed), engine_(mix(seed)) {}

    // Child generator for a named stage ("balance", "split", "train/run-3/epoch-7", ...).
    Rng stream(std::string_view name) const {
        return Rng(mix(base_seed_ ^ fnv1a64(name)));
    }

    std::uint64_t seed() const { return base_seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased integer in [0, bound) via rejection sampling.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        std::uint64_t r = next_u64();
        while (r < threshold) r = next_u64();
        return r % bound;
    }

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), returned ascending.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer; spreads structured seeds over the state space
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::uint64_t base_seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace avp
