#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include "caae/tensor.hpp"

namespace caae {

// Seeded random stream. Uniform/normal draws are computed from raw 64-bit
// words rather than std distributions so that a given seed produces the
// same sequence on every standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal, Box-Muller; the second value of each pair is cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // [0, n)
    int uniform_int(int n) {
        int v = static_cast<int>(uniform() * n);
        return v >= n ? n - 1 : v;
    }

    int uniform_int(int lo, int hi_inclusive) { return lo + uniform_int(hi_inclusive - lo + 1); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
}  // namespace detail

// Independent stream keyed by (master seed, stream label, index). Used to
// give every consumer (init, batch sampling, priors, per-patch noise, ...)
// its own reproducible sequence, so runs can resume mid-stream.
inline Rng derive_rng(std::uint64_t master, std::string_view stream, std::uint64_t index = 0) {
    std::uint64_t h = hash_bytes(stream.data(), stream.size());
    std::uint64_t s = detail::splitmix64(master ^ detail::splitmix64(h ^ detail::splitmix64(index)));
    return Rng(s);
}

}  // namespace caae
