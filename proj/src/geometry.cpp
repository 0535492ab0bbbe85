#include "xlmimo/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace xlmimo {

ArrayGeometry ArrayGeometry::ula(int num_antennas, double wavelength) {
    require(num_antennas >= 1, "ula: need at least one antenna");
    require(wavelength > 0.0, "ula: wavelength must be positive");
    ArrayGeometry g;
    g.num_antennas = num_antennas;
    g.wavelength = wavelength;
    g.spacing = wavelength / 2.0;
    g.coords.resize(num_antennas);
    for (int n = 0; n < num_antennas; ++n)
        g.coords(n) = n * g.spacing - (num_antennas - 1) * g.spacing / 2.0;
    return g;
}

ArrayGeometry ArrayGeometry::from_carrier_ghz(int num_antennas, double fc_ghz) {
    require(fc_ghz > 0.0, "from_carrier_ghz: carrier must be positive");
    const double c = 299792458.0;
    return ula(num_antennas, c / (fc_ghz * 1e9));
}

CVec array_response(const ArrayGeometry& geom, double theta, double r) {
    require(r > 0.0, "array_response: distance must be positive");
    require(std::abs(theta) <= kPi / 2 + 1e-12, "array_response: |theta| must be <= pi/2");
    const int n = geom.num_antennas;
    const double k = 2.0 * kPi / geom.wavelength;
    const double st = std::sin(theta);
    CVec a(n);
    for (int i = 0; i < n; ++i) {
        const double y = geom.coords(i);
        // r^(n) - r = (y^2 - 2 r y sin(theta)) / (r^(n) + r); the direct
        // sqrt difference cancels catastrophically in the far field.
        const double excess = y * y - 2.0 * r * y * st;
        const double rn = std::sqrt(std::max(r * r + excess, 0.0));
        const double phase = -k * (excess / (rn + r));
        a(i) = Complex(std::cos(phase), std::sin(phase));
    }
    return a;
}

CVec array_response_far(const ArrayGeometry& geom, double theta) {
    const int n = geom.num_antennas;
    const double k = 2.0 * kPi / geom.wavelength;
    const double st = std::sin(theta);
    CVec a(n);
    for (int i = 0; i < n; ++i) {
        const double phase = k * geom.coords(i) * st;
        a(i) = Complex(std::cos(phase), std::sin(phase));
    }
    return a;
}

ChannelRealization generate_channel(const ArrayGeometry& geom, const ChannelParams& params,
                                    uint64_t seed) {
    require(params.num_ues >= 1, "generate_channel: need at least one UE");
    require(params.paths_per_ue >= 1, "generate_channel: L_u must be >= 1");
    require(params.r_min > 0.0 && params.r_max >= params.r_min,
            "generate_channel: distance range must lie in (0, inf)");
    require(params.theta_max >= params.theta_min, "generate_channel: bad angle range");

    const int num_ues = params.num_ues;
    const int paths = params.paths_per_ue;
    const double kf = db2lin(params.rician_db);
    const double los_var = kf / (kf + 1.0);
    const int denom = params.nlos_norm_per_ue ? (paths - 1) : (num_ues * paths - 1);
    const double nlos_var = paths > 1 ? 1.0 / ((kf + 1.0) * denom) : 0.0;

    Rng rng(seed);
    ChannelRealization ch;
    ch.rician_factor = kf;
    ch.per_ue_paths.resize(num_ues);
    ch.H_spatial = CMat::Zero(geom.num_antennas, num_ues);

    for (int u = 0; u < num_ues; ++u) {
        auto& ue_paths = ch.per_ue_paths[u];
        ue_paths.resize(paths);
        for (int l = 0; l < paths; ++l) {
            PathComponent p;
            p.aoa = rng.uniform(params.theta_min, params.theta_max);
            p.distance = rng.uniform(params.r_min, params.r_max);
            p.is_los = (l == 0);
            p.gain = rng.cnormal(p.is_los ? los_var : nlos_var);
            ue_paths[l] = p;
            ch.H_spatial.col(u) += array_response(geom, p.aoa, p.distance) * p.gain;
        }
    }
    ch.H_beam = beam_transform(ch.H_spatial);
    return ch;
}

CMat dft_matrix(int n) {
    CMat d(n, n);
    const double scale = 1.0 / std::sqrt(double(n));
    for (int row = 0; row < n; ++row) {
        for (int col = 0; col < n; ++col) {
            const double phase = -2.0 * kPi * double(row) * double(col) / double(n);
            d(row, col) = scale * Complex(std::cos(phase), std::sin(phase));
        }
    }
    return d;
}

CMat beam_transform(const CMat& H_spatial) {
    return dft_matrix(int(H_spatial.rows())) * H_spatial;
}

CMat inverse_beam_transform(const CMat& H_beam) {
    return dft_matrix(int(H_beam.rows())).adjoint() * H_beam;
}

int beam_support_count(const CVec& h_beam, double fraction) {
    RVec energy = h_beam.cwiseAbs2();
    std::sort(energy.data(), energy.data() + energy.size(), std::greater<double>());
    const double target = fraction * energy.sum();
    double acc = 0.0;
    for (int i = 0; i < energy.size(); ++i) {
        acc += energy(i);
        if (acc >= target) return i + 1;
    }
    return int(energy.size());
}

} // namespace xlmimo
