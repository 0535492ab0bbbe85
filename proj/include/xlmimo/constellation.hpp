#ifndef XLMIMO_CONSTELLATION_HPP
#define XLMIMO_CONSTELLATION_HPP

#include "xlmimo/common.hpp"

#include <vector>

namespace xlmimo {

// Gray-mapped square QAM, unit average symbol energy by default.
// Point index q is its bit pattern: the high half of the bits Gray-codes the
// in-phase level, the low half the quadrature level.
struct Constellation {
    int order = 0;                // Q
    int bits_per_symbol = 0;      // log2(Q)
    double avg_energy = 1.0;      // E_s
    std::vector<Complex> points;  // length Q, points[q] carries bits q

    static Constellation qam(int order, double avg_energy = 1.0);
};

struct HardDecision {
    int index = 0; // constellation index (= Gray bit pattern)
    Complex point{0.0, 0.0};
};

// Nearest-point rule, ties broken toward the lower index.
HardDecision hard_decision(Complex x, const Constellation& c);

// Number of differing Gray bits between two constellation indices.
int bit_errors(int index_a, int index_b);

} // namespace xlmimo

#endif
