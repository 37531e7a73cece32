#pragma once

// Deterministic random source. mt19937_64 has a standard-mandated sequence;
// the distributions are hand-rolled here because the std distribution objects
// are implementation-defined and would break cross-platform reproducibility.

#include <cmath>
#include <cstdint>
#include <random>

namespace vlmforge {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), unbiased via rejection
    int uniform_int(int n) {
        const std::uint64_t bound = ~0ull - ~0ull % static_cast<std::uint64_t>(n);
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= bound);
        return static_cast<int>(x % static_cast<std::uint64_t>(n));
    }

    double normal(double mean = 0.0, double sd = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + sd * spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return mean + sd * u * f;
    }

    // splits off an independent, reproducible stream
    Rng fork(std::uint64_t salt) {
        return Rng(eng_() ^ (salt * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
    }

  private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace vlmforge
