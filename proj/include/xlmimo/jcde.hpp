#ifndef XLMIMO_JCDE_HPP
#define XLMIMO_JCDE_HPP

#include "xlmimo/common.hpp"
#include "xlmimo/constellation.hpp"
#include "xlmimo/flops.hpp"
#include "xlmimo/geometry.hpp"
#include "xlmimo/initial_ce.hpp"
#include "xlmimo/polar.hpp"

#include <optional>
#include <vector>

namespace xlmimo {

struct SubArrayPartition {
    int num_antennas = 0;
    int count = 0;            // C
    std::vector<int> start;   // block offsets
    std::vector<int> size;    // N_c per block

    static SubArrayPartition even(int num_antennas, int num_subarrays);
};

struct JcdeConfig {
    int iterations = 30;  // T
    double damping = 0.5; // delta scales the fresh value; 1 = no damping
    int gbar_theta = 5, gbar_r = 5;
    double sigma_theta_first = deg2rad(5.0), sigma_theta_last = deg2rad(0.1); // radians
    double sigma_r_first = 5.0, sigma_r_last = 1.0;                           // meters
    double eps_var = 1e-12;
    double xi_max = 1e6;
    double eps_div = 1e-12;
    bool update_model = true;  // reinforcement of S in iterations
    bool rebase_errors = true; // translate e-message means when S moves
};

// Gaussian message parameters of the EP loop. Data messages live on (c, u, k)
// and (u, k); residual-error messages on (n, u, k) and (n, u).
struct EpState {
    // data symbol messages, one U x K slab per sub-array
    std::vector<CArr> x_q_mean, x_v_mean, x_w_mean;
    std::vector<RArr> x_q_var, x_v_var, x_w_var;
    CArr x_q_mean_comb, x_mean, x_b_mean; // U x K
    RArr x_q_var_comb, x_var, x_b_var;

    // residual channel error messages, one N x U slab per column k
    std::vector<CArr> e_q_mean, e_v_mean;
    std::vector<RArr> e_q_var, e_v_var;
    CArr e_q_mean_comb, e_mean, e_b_mean; // N x U
    RArr e_q_var_comb, e_var, e_b_var;

    RArr sigma_e; // N x U prior variances (Theta)
    CMat S_beam;  // N x U model-based estimate

    // per-UE model parameters behind S_beam
    std::vector<std::vector<double>> theta_hat, r_hat;
    std::vector<std::vector<Complex>> z_hat;
};

struct JcdeTracePoint {
    int iteration = 0;
    double nmse_db = 0.0;
    double ber = 0.0;
};

struct JcdeOutput {
    CMat X_hat;         // U x K posterior means, pilot columns pinned
    CMat H_beam_hat;    // S + E at the final iteration
    CMat H_spatial_hat;
    std::vector<JcdeTracePoint> trace; // filled when truth is provided
    FlopsCounter flops;
};

// Raised when a non-finite message is detected; the trial counts as diverged.
class JcdeDivergence : public std::runtime_error {
public:
    explicit JcdeDivergence(const std::string& what) : std::runtime_error(what) {}
};

// Ground truth hooks for per-iteration traces.
struct JcdeTruth {
    const CMat* H_beam = nullptr;
    const std::vector<int>* data_indices = nullptr; // as produced by draw_data
};

class EpEngine {
public:
    EpEngine(const CMat& Y_beam, const CMat& X_pilot, const Constellation& constellation,
             const SubArrayPartition& partition, double noise_var, const JcdeConfig& cfg,
             const ArrayGeometry& geom);

    // Standard start: S = D_N H0, zero-mean error messages, data priors.
    void init_from(const InitialEstimate& initial);

    // Channel revealed: S = H_beam, E pinned to zero, only the data half runs.
    void init_known_channel(const CMat& H_beam);

    // Data revealed: X pinned everywhere, only the error half + model run.
    void init_known_data(const InitialEstimate& initial, const CMat& X_true);

    void set_truth(const JcdeTruth& truth) { truth_ = truth; }

    // One full sweep: data estimation, error estimation, EM, reinforcement.
    void step();

    JcdeOutput finish() const;
    JcdeOutput run(); // iterations per config

    const EpState& state() const { return state_; }
    EpState& state() { return state_; }
    int iteration() const { return iter_; }
    const FlopsCounter& flops() const { return flops_; }

    // Individual phases of one sweep, exposed so tests can drive them against
    // independent oracles. step() composes them in the documented order.
    void data_measurement_update_block(int c, int k);
    void data_phase();
    void error_phase();
    void em_update();
    void reinforce_model();

private:
    void record_trace();
    void check_finite(const char* phase) const;

    double clamp_var(double v) const;
    // Gaussian division (precision subtraction) with the clamp policy applied.
    void divide(Complex post_mean, double post_var, Complex part_mean, double part_var,
                Complex& out_mean, double& out_var) const;

    CMat Y_;       // N x K, beam domain
    CMat X_pilot_; // U x K_p
    Constellation constel_;
    SubArrayPartition part_;
    double noise_var_ = 0.0;
    JcdeConfig cfg_;
    ArrayGeometry geom_;
    CMat dft_;

    int num_rx_ = 0, num_ues_ = 0, num_cols_ = 0, num_pilots_ = 0;
    bool run_data_ = true, run_error_ = true;
    int iter_ = 0;

    EpState state_;
    std::optional<JcdeTruth> truth_;
    FlopsCounter flops_;
    std::vector<JcdeTracePoint> trace_;
};

JcdeOutput run_jcde(const CMat& Y_beam, const CMat& X_pilot, const InitialEstimate& initial,
                    const Constellation& constellation, const SubArrayPartition& partition,
                    double noise_var, const JcdeConfig& cfg, const ArrayGeometry& geom,
                    const JcdeTruth* truth = nullptr);

// Data detection with the channel handed over (genie CSI or an external
// estimate); runs the data half of the EP loop for the configured iterations.
JcdeOutput detect_with_known_channel(const CMat& Y_beam, const CMat& X_pilot,
                                     const CMat& H_beam, const Constellation& constellation,
                                     const SubArrayPartition& partition, double noise_var,
                                     const JcdeConfig& cfg, const ArrayGeometry& geom,
                                     const JcdeTruth* truth = nullptr);

// Channel estimation with the data handed over (genie data).
JcdeOutput estimate_with_known_data(const CMat& Y_beam, const CMat& X_pilot,
                                    const InitialEstimate& initial, const CMat& X_true,
                                    const Constellation& constellation,
                                    const SubArrayPartition& partition, double noise_var,
                                    const JcdeConfig& cfg, const ArrayGeometry& geom,
                                    const JcdeTruth* truth = nullptr);

// Posterior moments of a QAM symbol under a Gaussian measurement, computed
// with max-subtracted exponentials.
void qam_denoise(Complex measurement, double var, const Constellation& c, Complex& mean,
                 double& out_var);

} // namespace xlmimo

#endif
