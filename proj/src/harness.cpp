#include "xlmimo/harness.hpp"

#include "xlmimo/frames.hpp"
#include "xlmimo/geometry.hpp"
#include "xlmimo/initial_ce.hpp"
#include "xlmimo/jcde.hpp"
#include "xlmimo/metrics.hpp"
#include "xlmimo/polar.hpp"
#include "xlmimo/rng.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

namespace xlmimo {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct MethodResult {
    double nmse_lin = kNan;
    double ber = kNan;
    double flops = 0.0;
    bool diverged = false;
    bool ran = false;
};

struct TrialResult {
    std::vector<MethodResult> per_method;
};

JcdeConfig jcde_config_from(const Config& cfg) {
    JcdeConfig j;
    j.iterations = cfg.T;
    j.damping = cfg.damping;
    j.gbar_theta = cfg.Gbar_theta;
    j.gbar_r = cfg.Gbar_r;
    j.sigma_theta_first = deg2rad(cfg.sigma_theta_first_deg);
    j.sigma_theta_last = deg2rad(cfg.sigma_theta_last_deg);
    j.sigma_r_first = cfg.sigma_r_first_m;
    j.sigma_r_last = cfg.sigma_r_last_m;
    j.eps_var = cfg.eps_var;
    j.xi_max = cfg.xi_max;
    j.update_model = cfg.update_model;
    j.rebase_errors = cfg.rebase_errors;
    return j;
}

ChannelParams channel_params_from(const Config& cfg) {
    ChannelParams p;
    p.num_ues = cfg.U;
    p.paths_per_ue = cfg.Lu;
    p.theta_min = deg2rad(cfg.theta_min_deg);
    p.theta_max = deg2rad(cfg.theta_max_deg);
    p.r_min = cfg.r_min_m;
    p.r_max = cfg.r_max_m;
    p.rician_db = cfg.Kf_db;
    p.nlos_norm_per_ue = cfg.nlos_norm == "per_ue";
    return p;
}

int method_index(const std::string& name) {
    const auto& all = all_methods();
    for (size_t i = 0; i < all.size(); ++i)
        if (all[i] == name) return int(i);
    throw DomainError("unknown method '" + name + "'");
}

} // namespace

const std::vector<std::string>& all_methods() {
    static const std::vector<std::string> methods = {
        "ls", "psomp", "prop-init", "lmmse-init", "prop-jcde", "genie-csi", "genie-data"};
    return methods;
}

std::vector<ResultRow> run_sweep(const Config& base_cfg, int num_threads) {
    Config cfg = base_cfg;
    cfg.validate();
    if (cfg.methods.empty())
        cfg.methods = {"ls", "psomp", "prop-init"};
    if (num_threads < 1) num_threads = 1;

    std::vector<bool> enabled(all_methods().size(), false);
    for (const auto& m : cfg.methods) enabled[size_t(method_index(m))] = true;
    const bool needs_initial = enabled[2] || enabled[3] || enabled[4] || enabled[6];
    const bool needs_jcde_machinery = enabled[3] || enabled[4] || enabled[5] || enabled[6];

    const ArrayGeometry geom = ArrayGeometry::from_carrier_ghz(cfg.N, cfg.fc_ghz);
    const PolarGrid grid = build_polar_grid(geom, cfg.G_theta, cfg.G_r, cfg.gamma_coh,
                                            deg2rad(cfg.theta_min_deg), deg2rad(cfg.theta_max_deg));
    const Dictionary grid_dict = build_dictionary(geom, grid);
    const Constellation constel = Constellation::qam(cfg.Q);

    std::vector<ResultRow> rows;
    Rng root(cfg.seed);

    for (size_t pi = 0; pi < cfg.sweep_values.size(); ++pi) {
        const double value = cfg.sweep_values[pi];
        Config point = cfg;
        if (cfg.sweep_axis == "snr") point.snr_db = value;
        else if (cfg.sweep_axis == "kp") point.Kp = int(value);
        else point.C = cfg.N / int(value); // nc sweep
        point.validate();

        const SubArrayPartition part = SubArrayPartition::even(point.N, point.C);
        const JcdeConfig jcfg = jcde_config_from(point);
        const ChannelParams chp = channel_params_from(point);
        const int per_ue_budget = (point.L_hat + point.U - 1) / point.U;

        std::vector<TrialResult> trial_results(size_t(point.trials));
        std::atomic<int> next{0};

        auto worker = [&]() {
            for (;;) {
                const int ti = next.fetch_add(1);
                if (ti >= point.trials) break;
                TrialResult& tr = trial_results[size_t(ti)];
                tr.per_method.assign(all_methods().size(), MethodResult{});

                const Rng base = root.fork({uint64_t(pi), uint64_t(ti)});
                const uint64_t ch_seed = base.fork({1}).next_u64();
                const uint64_t fr_seed = base.fork({2}).next_u64();
                const uint64_t nz_seed = base.fork({3}).next_u64();

                const ChannelRealization ch = generate_channel(geom, chp, ch_seed);
                const PilotMode pmode = point.pilot_mode == "orthogonal"
                                            ? PilotMode::kOrthogonal
                                            : PilotMode::kLowCoherence;
                const Frame frame =
                    build_frame(point.U, point.Kp, point.Kd, constel, fr_seed, pmode);
                const ReceivedSignal rx =
                    transmit(ch.H_spatial, frame.X, point.snr_db, nz_seed);
                const CMat y_p = rx.Y_spatial.leftCols(point.Kp);

                if (enabled[0]) { // ls
                    auto& r = tr.per_method[0];
                    const CMat h_ls = ls_baseline(y_p, frame.X_p);
                    r.nmse_lin = nmse_linear(ch.H_spatial, h_ls);
                    r.flops = double(point.N) * point.Kp * point.U +
                              double(point.U) * point.U * point.U;
                    r.ran = true;
                }
                if (enabled[1]) { // psomp
                    auto& r = tr.per_method[1];
                    FlopsCounter fc;
                    const InitialEstimate est =
                        psomp_baseline(y_p, frame.X_p, geom, grid_dict, per_ue_budget, &fc);
                    r.nmse_lin = nmse_linear(ch.H_spatial, est.H0_spatial);
                    r.flops = fc.total();
                    r.ran = true;
                }

                InitialEstimate initial;
                FlopsCounter init_flops;
                if (needs_initial) {
                    initial = estimate_initial(y_p, frame.X_p, geom, grid_dict, point.L_hat,
                                               &init_flops);
                    if (enabled[2]) { // prop-init
                        auto& r = tr.per_method[2];
                        r.nmse_lin = nmse_linear(ch.H_spatial, initial.H0_spatial);
                        r.flops = init_flops.total();
                        r.ran = true;
                    }
                }
                if (!needs_jcde_machinery) continue;

                JcdeTruth truth;
                truth.H_beam = &ch.H_beam;
                truth.data_indices = &frame.data_indices;

                if (enabled[3]) { // lmmse-init: detection with the initial CSI
                    auto& r = tr.per_method[3];
                    r.ran = true;
                    try {
                        const CMat s_init = beam_transform(initial.H0_spatial);
                        const JcdeOutput out =
                            detect_with_known_channel(rx.Y_beam, frame.X_p, s_init, constel,
                                                      part, rx.noise_var, jcfg, geom);
                        r.nmse_lin = nmse_linear(ch.H_spatial, initial.H0_spatial);
                        r.ber = ber(out.X_hat.rightCols(point.Kd), frame.data_indices, constel);
                        r.flops = init_flops.total() + out.flops.total();
                    } catch (const JcdeDivergence&) {
                        r.diverged = true;
                    }
                }
                if (enabled[4]) { // prop-jcde
                    auto& r = tr.per_method[4];
                    r.ran = true;
                    try {
                        const JcdeOutput out = run_jcde(rx.Y_beam, frame.X_p, initial, constel,
                                                        part, rx.noise_var, jcfg, geom);
                        r.nmse_lin = nmse_linear(ch.H_beam, out.H_beam_hat);
                        r.ber = ber(out.X_hat.rightCols(point.Kd), frame.data_indices, constel);
                        r.flops = init_flops.total() + out.flops.total();
                    } catch (const JcdeDivergence&) {
                        r.diverged = true;
                    }
                }
                if (enabled[5]) { // genie-csi
                    auto& r = tr.per_method[5];
                    r.ran = true;
                    try {
                        const JcdeOutput out =
                            detect_with_known_channel(rx.Y_beam, frame.X_p, ch.H_beam, constel,
                                                      part, rx.noise_var, jcfg, geom);
                        r.nmse_lin = 1e-30; // channel revealed
                        r.ber = ber(out.X_hat.rightCols(point.Kd), frame.data_indices, constel);
                        r.flops = out.flops.total();
                    } catch (const JcdeDivergence&) {
                        r.diverged = true;
                    }
                }
                if (enabled[6]) { // genie-data
                    auto& r = tr.per_method[6];
                    r.ran = true;
                    try {
                        const JcdeOutput out =
                            estimate_with_known_data(rx.Y_beam, frame.X_p, initial, frame.X,
                                                     constel, part, rx.noise_var, jcfg, geom);
                        r.nmse_lin = nmse_linear(ch.H_beam, out.H_beam_hat);
                        r.flops = init_flops.total() + out.flops.total();
                    } catch (const JcdeDivergence&) {
                        r.diverged = true;
                    }
                }
            }
        };

        std::vector<std::thread> pool;
        for (int w = 1; w < num_threads; ++w) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();

        // single-writer reduce in trial order
        for (const auto& name : cfg.methods) {
            const int mi = method_index(name);
            ResultRow row;
            row.method = name;
            row.sweep_value = value;
            double nmse_sum = 0.0, ber_sum = 0.0, flops_sum = 0.0;
            int n_ok = 0, n_ber = 0, n_div = 0;
            for (const auto& tr : trial_results) {
                const auto& r = tr.per_method[size_t(mi)];
                if (!r.ran) continue;
                if (r.diverged) {
                    ++n_div;
                    continue;
                }
                ++n_ok;
                nmse_sum += r.nmse_lin;
                flops_sum += r.flops;
                if (!std::isnan(r.ber)) {
                    ber_sum += r.ber;
                    ++n_ber;
                }
            }
            row.trials = n_ok;
            row.diverged = n_div;
            row.nmse_db = n_ok ? (nmse_sum / n_ok <= 1e-30 ? -300.0 : lin2db(nmse_sum / n_ok))
                               : kNan;
            row.ber = n_ber ? ber_sum / n_ber : kNan;
            row.flops = n_ok ? flops_sum / n_ok : kNan;
            rows.push_back(row);
        }
    }
    return rows;
}

std::string results_to_csv(const std::vector<ResultRow>& rows) {
    std::string out = std::string(kCsvHeader) + "\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%.10g,%.10g,%d,%d\n", r.method.c_str(),
                      r.sweep_value, r.nmse_db, r.ber, r.flops, r.diverged, r.trials);
        out += buf;
    }
    return out;
}

} // namespace xlmimo
