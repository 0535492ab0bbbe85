#include "xlmimo/metrics.hpp"

#include <cmath>

namespace xlmimo {

double nmse_linear(const CMat& H_true, const CMat& H_est) {
    require(H_true.rows() == H_est.rows() && H_true.cols() == H_est.cols(),
            "nmse: shape mismatch");
    const double denom = H_true.squaredNorm();
    require(denom > 0.0, "nmse: zero reference");
    return (H_true - H_est).squaredNorm() / denom;
}

double nmse_db(const CMat& H_true, const CMat& H_est) {
    const double rel = nmse_linear(H_true, H_est);
    if (rel <= 1e-30) return -300.0;
    return lin2db(rel);
}

double ber(const CMat& X_data_est, const std::vector<int>& true_indices, const Constellation& c) {
    const int num_ues = int(X_data_est.rows());
    const int kd = int(X_data_est.cols());
    require(true_indices.size() == size_t(num_ues) * kd, "ber: index count mismatch");
    long errors = 0;
    for (int k = 0; k < kd; ++k)
        for (int u = 0; u < num_ues; ++u) {
            const auto dec = hard_decision(X_data_est(u, k), c);
            errors += bit_errors(dec.index, true_indices[size_t(k) * num_ues + u]);
        }
    return double(errors) / (double(num_ues) * kd * c.bits_per_symbol);
}

std::map<std::string, double> flops_account(const FlopsModelParams& p) {
    const double n = p.N, u = p.U, kp = p.Kp, kd = p.Kd, q = p.Q;
    const double g = double(p.G_theta) * p.G_r;
    const double lh = p.L_hat;
    const double lu = std::ceil(lh / u);
    const double c = p.C, t = p.T;
    const double nc = n / c;
    const double gb = double(p.Gbar_theta) * p.Gbar_r;
    const double k = kp + kd;

    std::map<std::string, double> f;
    f["ls"] = n * kp * u + u * u * u;
    f["psomp"] = n * u * (g + lh) + lh * lh * u * (n + g);
    f["proposed_initial"] =
        n * kp * (g + lh + n * u) + lh * lh * (g * kp + n * u + n * kp) + lh * lh * lh * kp +
        lh * lh * lh * lh;
    f["bigabp"] = t * (u * kd * n * q + u * k * n + u * lu * lu * n * n + u * n * n * lu);
    f["proposed_jcde"] = t * (c * u * kd * nc * nc + c * kd * nc * nc * nc + u * kd * q +
                              u * k * n + u * n * gb + u * lu * lu * n + u * lu * gb);
    return f;
}

} // namespace xlmimo
