#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ibra {

// Deterministic random source. mt19937 output is fixed by the standard, but
// the std:: distributions are not, so uniform/normal/shuffle are done by hand
// to keep byte-identical outputs across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    uint32_t next_u32() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        uint64_t hi = next_u32();
        uint64_t lo = next_u32();
        uint64_t x = ((hi << 32) | lo) >> 11;
        return static_cast<double>(x) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; cached second value for determinism-friendly pairing.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [lo, hi] by rejection.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x;
        do {
            x = (static_cast<uint64_t>(next_u32()) << 32) | next_u32();
        } while (x >= limit);
        return lo + static_cast<int64_t>(x % span);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ibra
