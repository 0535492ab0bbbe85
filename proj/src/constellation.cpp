#include "xlmimo/constellation.hpp"

#include <bit>
#include <cmath>

namespace xlmimo {

namespace {

// Inverse of the reflected binary Gray code.
int gray_decode(int g) {
    int v = 0;
    for (; g; g >>= 1) v ^= g;
    return v;
}

} // namespace

Constellation Constellation::qam(int order, double avg_energy) {
    require(order >= 4 && (order & (order - 1)) == 0, "qam: order must be a power of two >= 4");
    const int bits = std::countr_zero(unsigned(order));
    require(bits % 2 == 0, "qam: only square QAM (4, 16, 64, 256, ...)");

    Constellation c;
    c.order = order;
    c.bits_per_symbol = bits;
    c.avg_energy = avg_energy;

    const int side = 1 << (bits / 2);
    // E|x|^2 over the unscaled +-1, +-3, ... lattice is 2(side^2 - 1)/3.
    const double scale = std::sqrt(3.0 * avg_energy / (2.0 * (side * side - 1)));

    c.points.resize(order);
    for (int q = 0; q < order; ++q) {
        const int gi = q >> (bits / 2);
        const int gq = q & (side - 1);
        const double amp_i = (2 * gray_decode(gi) - (side - 1)) * scale;
        const double amp_q = (2 * gray_decode(gq) - (side - 1)) * scale;
        c.points[q] = Complex(amp_i, amp_q);
    }
    return c;
}

HardDecision hard_decision(Complex x, const Constellation& c) {
    int best = 0;
    double best_d = std::norm(x - c.points[0]);
    for (int q = 1; q < c.order; ++q) {
        const double d = std::norm(x - c.points[q]);
        if (d < best_d) {
            best_d = d;
            best = q;
        }
    }
    return {best, c.points[best]};
}

int bit_errors(int index_a, int index_b) {
    return std::popcount(unsigned(index_a ^ index_b));
}

} // namespace xlmimo
