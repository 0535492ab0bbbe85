#ifndef XLMIMO_METRICS_HPP
#define XLMIMO_METRICS_HPP

#include "xlmimo/common.hpp"
#include "xlmimo/constellation.hpp"

#include <map>
#include <string>
#include <vector>

namespace xlmimo {

// 10 log10(|H - H_hat|_F^2 / |H|_F^2), floored at -300 dB.
double nmse_db(const CMat& H_true, const CMat& H_est);
double nmse_linear(const CMat& H_true, const CMat& H_est);

// Gray-bit error fraction over the data block after hard decisions.
double ber(const CMat& X_data_est, const std::vector<int>& true_indices,
           const Constellation& c);

// Closed-form complexity surrogates from the published operation counts.
struct FlopsModelParams {
    int N, U, Kp, Kd, Q, G_theta, G_r, L_hat, C, T, Gbar_theta, Gbar_r;
};

// Returns per-method surrogate FLOPs: keys "ls", "psomp", "proposed_initial",
// "bigabp", "proposed_jcde".
std::map<std::string, double> flops_account(const FlopsModelParams& p);

} // namespace xlmimo

#endif
