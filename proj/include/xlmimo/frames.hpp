#ifndef XLMIMO_FRAMES_HPP
#define XLMIMO_FRAMES_HPP

#include "xlmimo/common.hpp"
#include "xlmimo/constellation.hpp"
#include "xlmimo/rng.hpp"

#include <vector>

namespace xlmimo {

enum class PilotMode {
    kLowCoherence, // unit-modulus rows, coherence-minimized (non-orthogonal regime)
    kOrthogonal,   // scaled DFT rows, requires K_p >= U
};

struct Frame {
    CMat X_p; // U x K_p
    CMat X_d; // U x K_d
    CMat X;   // U x (K_p + K_d), pilots first
    std::vector<int> data_indices; // matrix of X_d in X (per draw_data), bit source for BER
    int K_p = 0, K_d = 0;
};

struct ReceivedSignal {
    CMat Y_spatial; // N x K
    CMat Y_beam;    // N x K
    double noise_var = 0.0;
};

// Unit-modulus pilot rows with per-symbol energy E_s. In the low-coherence
// mode, rows start from the best of 32 random-phase draws and are then
// polished by projected gradient descent on a smoothed max-coherence
// objective. Deterministic under the seed.
CMat design_pilots(int num_ues, int pilot_len, uint64_t seed,
                   PilotMode mode = PilotMode::kLowCoherence, double symbol_energy = 1.0);

// Largest normalized cross-correlation |x_i x_j^H| / (|x_i||x_j|) over row pairs.
double max_row_coherence(const CMat& X_p);

// Lower bound on achievable max coherence for U rows in C^{K_p}.
double welch_bound(int num_rows, int dim);

// i.i.d. uniform symbols; also returns the drawn indices for bit-level metrics.
CMat draw_data(int num_ues, int data_len, const Constellation& c, uint64_t seed,
               std::vector<int>* indices = nullptr);

Frame build_frame(int num_ues, int pilot_len, int data_len, const Constellation& c,
                  uint64_t seed, PilotMode mode = PilotMode::kLowCoherence);

// Y = H X + N with noise variance calibrated per realization:
// sigma^2 = |H X|_F^2 / (N K snr_lin). snr_db = +inf switches noise off.
ReceivedSignal transmit(const CMat& H_spatial, const CMat& X, double snr_db, uint64_t seed);

} // namespace xlmimo

#endif
