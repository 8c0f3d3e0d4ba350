#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace qrt {

// Stateless 64-bit finalizer (splitmix64 output function). Used to derive
// independent stream seeds; identical sequences on every platform.
inline uint64_t mix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Derives the seed for sub-stream (lane0, lane1, lane2) of a master seed.
// Reports quote these lanes, so the derivation is part of the file format.
inline uint64_t derive_seed(uint64_t master, uint64_t lane0, uint64_t lane1 = 0,
                            uint64_t lane2 = 0) {
    uint64_t h = mix64(master);
    h = mix64(h ^ lane0);
    h = mix64(h ^ lane1);
    h = mix64(h ^ lane2);
    return h;
}

// Deterministic random stream: xoshiro256** core with hand-rolled
// distributions. std:: distributions are not bit-portable across standard
// libraries, so everything downstream of a seed goes through this class.
class RngStream {
public:
    explicit RngStream(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) {
            sm += 0x9E3779B97F4A7C15ull;
            w = mix64(sm);
        }
        s_[0] |= 1; // xoshiro must not start from the all-zero state
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53-bit resolution.
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform01() < p; }

    uint8_t bit() { return uint8_t(next_u64() >> 63); }

    // Unbiased uniform integer in [0, n). n must be >= 1.
    uint64_t below(uint64_t n) {
        uint64_t x, r;
        do {
            x = next_u64();
            r = x % n;
        } while (x - r > uint64_t(0) - n);
        return r;
    }

    // Standard normal via Box-Muller; the spare is cached, so draw counts
    // alternate 2, 0, 2, 0, ...
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform01(); // (0, 1], keeps log finite
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

    // Poisson sample by Knuth's product-of-uniforms inversion. Means above 60
    // are split using Poisson additivity so exp(-mean) never underflows.
    uint32_t poisson(double mean) {
        if (!(mean >= 0.0) || !std::isfinite(mean))
            throw std::invalid_argument("poisson: mean must be finite and non-negative");
        uint32_t total = 0;
        while (mean > 60.0) {
            total += poisson_knuth(60.0);
            mean -= 60.0;
        }
        return total + poisson_knuth(mean);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint32_t poisson_knuth(double mean) {
        if (mean == 0.0) return 0;
        const double limit = std::exp(-mean);
        uint32_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform01();
        } while (p > limit);
        return k - 1;
    }

    uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace qrt
