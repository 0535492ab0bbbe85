#ifndef XLMIMO_GEOMETRY_HPP
#define XLMIMO_GEOMETRY_HPP

#include "xlmimo/common.hpp"
#include "xlmimo/rng.hpp"

#include <vector>

namespace xlmimo {

// Uniform linear array on the y-axis, symmetric about the origin.
struct ArrayGeometry {
    int num_antennas = 0;
    double wavelength = 0.0; // meters
    double spacing = 0.0;    // meters
    RVec coords;             // y^(n), meters, strictly increasing

    static ArrayGeometry ula(int num_antennas, double wavelength);
    static ArrayGeometry from_carrier_ghz(int num_antennas, double fc_ghz);
};

struct PathComponent {
    double aoa = 0.0;      // radians, |aoa| <= pi/2
    double distance = 0.0; // meters, > 0
    Complex gain{0.0, 0.0};
    bool is_los = false;
};

struct ChannelRealization {
    std::vector<std::vector<PathComponent>> per_ue_paths; // [U][L_u]
    CMat H_spatial; // N x U
    CMat H_beam;    // N x U
    double rician_factor = 0.0; // linear
};

// Spherical-wavefront array response, phase-only model.
// Element n carries exp(-j 2pi/lambda (r^(n) - r)) with
// r^(n) = sqrt(r^2 + y^2 - 2 r y sin(theta)).
CVec array_response(const ArrayGeometry& geom, double theta, double r);

// Far-field limit of array_response: exp(+j 2pi y sin(theta) / lambda).
CVec array_response_far(const ArrayGeometry& geom, double theta);

struct ChannelParams {
    int num_ues = 0;
    int paths_per_ue = 1;
    double theta_min = -kPi / 3, theta_max = kPi / 3; // radians
    double r_min = 1.0, r_max = 10.0;                 // meters
    double rician_db = 10.0;
    // NLoS gain variance denominator: per-UE (L_u - 1) or total (L - 1) paths.
    bool nlos_norm_per_ue = true;
};

ChannelRealization generate_channel(const ArrayGeometry& geom, const ChannelParams& params,
                                    uint64_t seed);

// Unitary N-point DFT matrix (1/sqrt(N) scaling both directions).
CMat dft_matrix(int n);

CMat beam_transform(const CMat& H_spatial);
CMat inverse_beam_transform(const CMat& H_beam);

// Smallest number of beam-domain bins holding `fraction` of the vector energy.
int beam_support_count(const CVec& h_beam, double fraction);

} // namespace xlmimo

#endif
