#ifndef COTSNET_RNG_HPP
#define COTSNET_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace cots {

// All randomness goes through these helpers instead of std distributions,
// whose output is not pinned by the standard across library versions.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(static_cast<std::mt19937_64::result_type>(seed)) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) { // inclusive range
        return lo + static_cast<int>(eng_() % static_cast<uint64_t>(hi - lo + 1));
    }

    double normal() {
        // Box-Muller; cached second value keeps draws per call count deterministic
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // stable sub-stream derivation, e.g. per (seed, epoch, index)
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t x = a * 0x9e3779b97f4a7c15ULL + b + 0x2545f4914f6cdd1dULL;
        x ^= x >> 33;
        x *= 0xff51afd7ed558ccdULL;
        x ^= x >> 33;
        x *= 0xc4ceb9fe1a85ec53ULL;
        x ^= x >> 33;
        return x;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace cots

#endif
