#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fq::rng {

// splitmix64 finalizer; used to derive independent stream seeds.
inline uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t derive(uint64_t seed, uint64_t stream) {
    return mix(seed ^ mix(stream));
}

// mt19937_64 with pinned uniform/normal transforms. The std distributions
// are implementation-defined, so file formats and seeded tests go through
// these transforms instead.
class Prng {
public:
    explicit Prng(uint64_t seed) : eng_(seed) {}

    uint64_t bits() { return eng_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fq::rng
