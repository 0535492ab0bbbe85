#ifndef XLMIMO_CONFIG_HPP
#define XLMIMO_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace xlmimo {

// Flat key=value experiment configuration. Defaults reproduce the reference
// operating point (N=200, U=50, K_p=25, K_d=100, 64-QAM, T=30, C=4).
struct Config {
    int N = 200;
    int U = 50;
    double fc_ghz = 100.0;

    int Kp = 25;
    int Kd = 100;
    int Q = 64;
    std::string pilot_mode = "lowcoh"; // lowcoh | orthogonal

    int Lu = 3;
    double Kf_db = 10.0;
    double theta_min_deg = -60.0, theta_max_deg = 60.0;
    double r_min_m = 1.0, r_max_m = 10.0;
    std::string nlos_norm = "per_ue"; // per_ue | total

    int G_theta = 395;
    int G_r = 7;
    double gamma_coh = 0.6;

    int L_hat = 250;

    int T = 30;
    double damping = 0.5;
    int C = 4;
    int Gbar_theta = 5, Gbar_r = 5;
    double sigma_theta_first_deg = 5.0, sigma_theta_last_deg = 0.1;
    double sigma_r_first_m = 5.0, sigma_r_last_m = 1.0;
    double eps_var = 1e-12;
    double xi_max = 1e6;
    bool update_model = true;
    bool rebase_errors = true;

    double snr_db = 26.0;
    std::string sweep_axis = "snr"; // snr | kp | nc
    std::vector<double> sweep_values{26.0};
    int trials = 1;
    uint64_t seed = 1;
    std::vector<std::string> methods; // empty = caller-supplied default

    // Throws on unknown keys or unparsable values.
    void set(const std::string& key, const std::string& value);
    void validate() const;

    // key=value lines; '#' comments and blank lines ignored.
    static Config from_file(const std::string& path);
    static Config from_text(const std::string& text);
    void apply_overrides(const std::vector<std::string>& key_equals_value);

    // Full round-trippable snapshot in a fixed key order.
    std::string serialize() const;
};

// "lo:hi:step" inclusive range or comma-separated list.
std::vector<double> parse_value_list(const std::string& text);

} // namespace xlmimo

#endif
