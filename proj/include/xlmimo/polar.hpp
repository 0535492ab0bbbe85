#ifndef XLMIMO_POLAR_HPP
#define XLMIMO_POLAR_HPP

#include "xlmimo/common.hpp"
#include "xlmimo/geometry.hpp"

#include <vector>

namespace xlmimo {

struct PolarGrid {
    RVec angles;    // length G_theta, radians
    RMat distances; // G_theta x G_r, meters (per-angle rings)
    double gamma_coh = 0.0;
    double r_max = 0.0;
    int g_theta = 0, g_r = 0;
};

struct AtomMeta {
    double theta = 0.0;
    double r = 0.0;
    int ue = -1;   // set for refinement dictionaries
    int path = -1; // set for refinement dictionaries
};

struct Dictionary {
    CMat atoms; // N x M, each column unit modulus
    std::vector<AtomMeta> meta;
    int size() const { return int(atoms.cols()); }
};

// Largest distance ring for a target column coherence between rings.
double polar_r_max(int num_antennas, double wavelength, double gamma_coh);

inline constexpr double kPolarRingFloor = 0.1; // meters, endfire guard

// Angles uniform in the sin domain. Distance rings are reciprocal (uniform in
// 1/r, spacing calibrated to the coherence target, clipped at r_max) plus one
// quasi-far ring at G_r * r_max.
PolarGrid build_polar_grid(const ArrayGeometry& geom, int g_theta, int g_r, double gamma_coh,
                           double theta_min = -kPi / 2, double theta_max = kPi / 2);

// Angle-major atom ordering: all rings of angle 1, then angle 2, ...
Dictionary build_dictionary(const ArrayGeometry& geom, const PolarGrid& grid);

Dictionary build_candidate_dictionary(const std::vector<std::pair<double, double>>& candidates,
                                      const ArrayGeometry& geom);

// Exponentially shrinking per-iteration grid half-widths:
// sigma(t) = a exp(-t/2) + b through (1, first) and (T, last).
struct GridSchedule {
    double a = 0.0, b = 0.0;
    static GridSchedule through(double first, double last, int total_iters);
    double at(int t) const { return a * std::exp(-0.5 * t) + b; }
};

inline constexpr double kRefineRMin = 0.5; // meters, floor for distance grids

// Per-UE refinement dictionary: for each path, a Gbar_theta x Gbar_r block of
// atoms centered on the previous estimate; blocks concatenated over paths.
Dictionary build_refinement_grid(const std::vector<double>& theta_prev,
                                 const std::vector<double>& r_prev, double sigma_theta,
                                 double sigma_r, int gbar_theta, int gbar_r,
                                 const ArrayGeometry& geom);

} // namespace xlmimo

#endif
