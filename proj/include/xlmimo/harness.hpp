#ifndef XLMIMO_HARNESS_HPP
#define XLMIMO_HARNESS_HPP

#include "xlmimo/config.hpp"
#include "xlmimo/common.hpp"

#include <string>
#include <vector>

namespace xlmimo {

struct ResultRow {
    std::string method;
    double sweep_value = 0.0;
    double nmse_db = 0.0; // mean of linear NMSE over trials, then dB
    double ber = 0.0;     // NaN for estimator-only methods
    double flops = 0.0;   // mean surrogate FLOPs per trial
    int diverged = 0;
    int trials = 0;
};

// Known method names, in emission order.
const std::vector<std::string>& all_methods();

// Independent seeded trials per sweep point. Every method sees the same
// channel, frame, and noise within a trial. Diverged trials are excluded
// from the means and counted separately.
std::vector<ResultRow> run_sweep(const Config& cfg, int num_threads = 1);

// Fixed, versioned column order; '.' decimal, locale-free.
std::string results_to_csv(const std::vector<ResultRow>& rows);

inline constexpr const char* kCsvHeader = "method,sweep_value,nmse_db,ber,flops,diverged,trials";

} // namespace xlmimo

#endif
