#ifndef XLMIMO_RNG_HPP
#define XLMIMO_RNG_HPP

#include "xlmimo/common.hpp"

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace xlmimo {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// reproducible across compilers (std:: distributions are not).
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {
        uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    // Derives an independent child stream from this stream's seed and tags.
    // Forking does not consume state, so fork order never matters.
    Rng fork(std::initializer_list<uint64_t> tags) const {
        uint64_t h = seed_;
        for (uint64_t t : tags) {
            uint64_t x = h ^ (0x9e3779b97f4a7c15ULL + t);
            h = splitmix64(x);
        }
        return Rng(h);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); modulo bias is negligible for n << 2^64.
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * kPi * u2);
        have_spare_ = true;
        return mag * std::cos(2.0 * kPi * u2);
    }

    // CN(0, var): circularly symmetric complex Gaussian.
    Complex cnormal(double var = 1.0) {
        const double s = std::sqrt(var / 2.0);
        return {s * normal(), s * normal()};
    }

    CMat cnormal_matrix(Eigen::Index rows, Eigen::Index cols, double var = 1.0) {
        CMat m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = cnormal(var);
        return m;
    }

private:
    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t seed_ = 0;
    uint64_t state_[4]{};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace xlmimo

#endif
