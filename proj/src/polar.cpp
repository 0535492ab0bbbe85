#include "xlmimo/polar.hpp"

#include <algorithm>
#include <cmath>

namespace xlmimo {

double polar_r_max(int num_antennas, double wavelength, double gamma_coh) {
    require(gamma_coh > 0.0 && gamma_coh < 1.0, "polar_r_max: gamma_coh must be in (0,1)");
    const double n2 = double(num_antennas) * double(num_antennas);
    return 2.0 * n2 * wavelength * std::sqrt(0.001624 / (1.0 - gamma_coh));
}

namespace {

double ring_coherence(const ArrayGeometry& geom, double inv_r_gap) {
    const CVec a = array_response(geom, 0.0, 1.0 / inv_r_gap);
    const CVec b = array_response(geom, 0.0, 0.5 / inv_r_gap);
    return std::abs(a.dot(b)) / double(geom.num_antennas);
}

// Spacing in 1/r between consecutive rings so that neighbouring atoms at
// broadside meet the target coherence. Bisection on the measured coherence,
// which is monotone in the spacing over the main lobe.
double solve_ring_spacing(const ArrayGeometry& geom, double gamma_coh) {
    double lo = 1e-9, hi = 1e-9;
    while (ring_coherence(geom, hi) > gamma_coh && hi < 1e9) hi *= 2.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ring_coherence(geom, mid) > gamma_coh) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

PolarGrid build_polar_grid(const ArrayGeometry& geom, int g_theta, int g_r, double gamma_coh,
                           double theta_min, double theta_max) {
    require(g_theta >= 1 && g_r >= 1, "build_polar_grid: grid sizes must be >= 1");
    require(theta_max > theta_min || g_theta == 1, "build_polar_grid: degenerate angle range");

    PolarGrid grid;
    grid.g_theta = g_theta;
    grid.g_r = g_r;
    grid.gamma_coh = gamma_coh;
    grid.r_max = polar_r_max(geom.num_antennas, geom.wavelength, gamma_coh);

    grid.angles.resize(g_theta);
    const double smin = std::sin(theta_min);
    const double smax = std::sin(theta_max);
    for (int g = 0; g < g_theta; ++g) {
        const double s = g_theta == 1 ? 0.5 * (smin + smax)
                                      : smin + (smax - smin) * double(g) / double(g_theta - 1);
        grid.angles(g) = std::asin(s);
    }

    // Ring 0 is the quasi-far ring. Rings s >= 1 are reciprocal in distance
    // (uniform in 1/r with coherence-calibrated spacing) and scaled by
    // cos^2(theta): the wavefront curvature across the array goes as
    // cos^2(theta)/r, so every consecutive pair keeps the target coherence.
    const double spacing = solve_ring_spacing(geom, gamma_coh); // in 1/r at broadside
    grid.distances.resize(g_theta, g_r);
    for (int g = 0; g < g_theta; ++g) {
        const double ct2 = std::cos(grid.angles(g)) * std::cos(grid.angles(g));
        grid.distances(g, 0) = grid.r_max * double(g_r);
        for (int s = 1; s < g_r; ++s) {
            const double r = ct2 / (double(s) * spacing);
            grid.distances(g, s) =
                std::min(std::max(r, kPolarRingFloor), grid.r_max);
        }
    }
    return grid;
}

Dictionary build_dictionary(const ArrayGeometry& geom, const PolarGrid& grid) {
    Dictionary d;
    const int m = grid.g_theta * grid.g_r;
    d.atoms.resize(geom.num_antennas, m);
    d.meta.resize(m);
    int col = 0;
    for (int gt = 0; gt < grid.g_theta; ++gt) {
        for (int gr = 0; gr < grid.g_r; ++gr, ++col) {
            const double theta = grid.angles(gt);
            const double r = grid.distances(gt, gr);
            d.atoms.col(col) = array_response(geom, theta, r);
            d.meta[col] = {theta, r, -1, -1};
        }
    }
    return d;
}

Dictionary build_candidate_dictionary(const std::vector<std::pair<double, double>>& candidates,
                                      const ArrayGeometry& geom) {
    require(!candidates.empty(), "build_candidate_dictionary: empty candidate list");
    Dictionary d;
    d.atoms.resize(geom.num_antennas, Eigen::Index(candidates.size()));
    d.meta.resize(candidates.size());
    for (size_t l = 0; l < candidates.size(); ++l) {
        d.atoms.col(Eigen::Index(l)) = array_response(geom, candidates[l].first, candidates[l].second);
        d.meta[l] = {candidates[l].first, candidates[l].second, -1, int(l)};
    }
    return d;
}

GridSchedule GridSchedule::through(double first, double last, int total_iters) {
    require(total_iters >= 1, "GridSchedule: need at least one iteration");
    GridSchedule s;
    if (total_iters == 1) {
        s.a = 0.0;
        s.b = first;
        return s;
    }
    const double e1 = std::exp(-0.5);
    const double eT = std::exp(-0.5 * total_iters);
    s.a = (first - last) / (e1 - eT);
    s.b = first - s.a * e1;
    return s;
}

Dictionary build_refinement_grid(const std::vector<double>& theta_prev,
                                 const std::vector<double>& r_prev, double sigma_theta,
                                 double sigma_r, int gbar_theta, int gbar_r,
                                 const ArrayGeometry& geom) {
    require(theta_prev.size() == r_prev.size(), "build_refinement_grid: center size mismatch");
    require(gbar_theta >= 1 && gbar_r >= 1, "build_refinement_grid: grid sizes must be >= 1");
    require(sigma_theta >= 0.0 && sigma_r >= 0.0, "build_refinement_grid: negative range");

    const int paths = int(theta_prev.size());
    const int block = gbar_theta * gbar_r;
    Dictionary d;
    d.atoms.resize(geom.num_antennas, Eigen::Index(paths) * block);
    d.meta.resize(size_t(paths) * block);

    int col = 0;
    for (int l = 0; l < paths; ++l) {
        const double t_lo = std::max(theta_prev[l] - sigma_theta, -kPi / 2);
        const double t_hi = std::min(theta_prev[l] + sigma_theta, kPi / 2);
        double r_lo = std::max(kRefineRMin, r_prev[l] - sigma_r);
        double r_hi = std::max(r_lo, r_prev[l] + sigma_r);
        for (int gt = 0; gt < gbar_theta; ++gt) {
            const double theta = gbar_theta == 1
                                     ? 0.5 * (t_lo + t_hi)
                                     : t_lo + (t_hi - t_lo) * double(gt) / double(gbar_theta - 1);
            for (int gr = 0; gr < gbar_r; ++gr, ++col) {
                const double r = gbar_r == 1
                                     ? 0.5 * (r_lo + r_hi)
                                     : r_lo + (r_hi - r_lo) * double(gr) / double(gbar_r - 1);
                d.atoms.col(col) = array_response(geom, theta, r);
                d.meta[size_t(col)] = {theta, r, -1, l};
            }
        }
    }
    return d;
}

} // namespace xlmimo
