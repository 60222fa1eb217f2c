#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sidrec {

// Seeded RNG with self-contained distributions. std::mt19937_64 is the
// engine, but the distribution algorithms are implemented here because the
// standard library leaves them implementation-defined and every artifact
// output is required to be reproducible from config + seed alone.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n), n >= 1.
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    int range(int lo, int hi) {  // inclusive lo, exclusive hi
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo)));
    }

    // Standard normal via Box-Muller (fresh pair each call, first value used).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Knuth's product method; fine for the small means used here.
    int poisson(double mean) {
        const double limit = std::exp(-mean);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

    // Derive an independent stream; `salt` distinguishes streams from the
    // same parent seed.
    Rng fork(std::uint64_t salt) {
        return Rng(engine_() ^ (salt * 0x9e3779b97f4a7c15ull));
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace sidrec
