// Link-level simulator CLI: initial channel estimation sweeps, JCDE sweeps,
// beam-domain leakage dumps, and a built-in selftest.

#include "xlmimo/config.hpp"
#include "xlmimo/frames.hpp"
#include "xlmimo/geometry.hpp"
#include "xlmimo/harness.hpp"
#include "xlmimo/initial_ce.hpp"
#include "xlmimo/jcde.hpp"
#include "xlmimo/metrics.hpp"
#include "xlmimo/polar.hpp"
#include "xlmimo/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace xlmimo;

constexpr const char* kVersion = "xlmimo-sim 1.0.0";

int thread_count(int cli_threads) {
    if (cli_threads > 0) return cli_threads;
    if (const char* env = std::getenv("XLMIMO_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? int(hw) : 1;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

void write_manifest(const std::string& out_prefix, const Config& cfg,
                    const std::string& command) {
    nlohmann::ordered_json manifest;
    manifest["version"] = kVersion;
    manifest["command"] = command;
    manifest["config"] = cfg.serialize();
    write_file(out_prefix + ".manifest.json", manifest.dump(2) + "\n");
}

Config load_config(const std::string& config_path, const std::string& manifest_path,
                   const std::vector<std::string>& overrides, bool* sweep_configured) {
    Config cfg;
    std::string sources;
    if (!manifest_path.empty()) {
        std::ifstream in(manifest_path);
        if (!in) throw std::runtime_error("cannot open manifest " + manifest_path);
        const auto manifest = nlohmann::json::parse(in);
        const auto text = manifest.at("config").get<std::string>();
        cfg = Config::from_text(text);
        sources += text;
    } else if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open config " + config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = Config::from_text(ss.str());
        sources += ss.str();
    }
    for (const auto& kv : overrides) sources += kv + "\n";
    cfg.apply_overrides(overrides);
    if (sweep_configured) *sweep_configured = sources.find("sweep.values") != std::string::npos;
    return cfg;
}

int run_experiment(Config cfg, const std::vector<std::string>& default_methods,
                   const std::string& out_prefix, int threads, const std::string& command) {
    if (cfg.methods.empty()) cfg.methods = default_methods;
    cfg.validate();
    const auto rows = run_sweep(cfg, threads);
    write_file(out_prefix + ".csv", results_to_csv(rows));
    write_manifest(out_prefix, cfg, command);

    int exit_code = 0;
    for (const auto& r : rows) {
        if (r.trials == 0) {
            std::fprintf(stderr, "all trials diverged: method=%s sweep=%g\n", r.method.c_str(),
                         r.sweep_value);
            exit_code = 1;
        }
    }
    std::printf("%s", results_to_csv(rows).c_str());
    std::printf("wrote %s.csv\n", out_prefix.c_str());
    return exit_code;
}

int run_leakage_demo(const Config& cfg, double r_meters, double theta_deg,
                     const std::string& out_prefix, const std::string& command) {
    const ArrayGeometry geom = ArrayGeometry::from_carrier_ghz(cfg.N, cfg.fc_ghz);
    const double theta = deg2rad(theta_deg);
    const CVec h_sp = std::isinf(r_meters) ? array_response_far(geom, theta)
                                           : array_response(geom, theta, r_meters);
    const CMat h_beam = beam_transform(h_sp);

    std::string csv = "bin,amplitude\n";
    char buf[64];
    for (int n = 0; n < cfg.N; ++n) {
        std::snprintf(buf, sizeof buf, "%d,%.10g\n", n, std::abs(h_beam(n, 0)));
        csv += buf;
    }
    write_file(out_prefix + ".csv", csv);
    write_manifest(out_prefix, cfg, command);
    const int bins95 = beam_support_count(h_beam.col(0), 0.95);
    std::printf("r=%g m theta=%g deg: %d bins hold 95%% of the energy; wrote %s.csv\n", r_meters,
                theta_deg, bins95, out_prefix.c_str());
    return 0;
}

#define SELFTEST(name, cond)                                    \
    do {                                                        \
        const bool ok_ = (cond);                                \
        std::printf("%-52s %s\n", name, ok_ ? "PASS" : "FAIL"); \
        if (!ok_) failures++;                                   \
    } while (0)

int run_selftest() {
    int failures = 0;

    {
        const auto geom = ArrayGeometry::from_carrier_ghz(64, 100.0);
        const CVec a = array_response(geom, 0.5, 4.0);
        SELFTEST("array response unit modulus",
                 (a.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
    }
    {
        Rng rng(11);
        const CMat h = rng.cnormal_matrix(64, 5);
        const CMat hb = beam_transform(h);
        SELFTEST("beam transform preserves norm",
                 std::abs(hb.norm() - h.norm()) < 1e-10 * h.norm());
        SELFTEST("beam round trip", (inverse_beam_transform(hb) - h).norm() < 1e-10 * h.norm());
    }
    {
        const auto c = Constellation::qam(16);
        Rng rng(5);
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
            const Complex y = rng.cnormal(1.0);
            const double v = 0.05 + rng.uniform();
            Complex mean;
            double var;
            qam_denoise(y, v, c, mean, var);
            Complex num{0, 0};
            double den = 0, sec = 0;
            for (const auto& p : c.points) {
                const double w = std::exp(-std::norm(y - p) / v);
                num += w * p;
                den += w;
                sec += w * std::norm(p);
            }
            worst = std::max(worst, std::abs(mean - num / den));
            worst = std::max(worst, std::abs(var - (sec / den - std::norm(num / den))));
        }
        SELFTEST("denoiser matches enumeration", worst < 1e-12);
    }
    {
        const CMat x = design_pilots(8, 4, 3);
        const double mu = max_row_coherence(x);
        SELFTEST("pilot coherence below 1.5x Welch", mu <= 1.5 * welch_bound(8, 4));
        SELFTEST("pilot row norms", std::abs(x.row(0).norm() - 2.0) < 1e-9);
    }
    {
        Config cfg;
        cfg.N = 16;
        cfg.U = 3;
        cfg.Kp = 3;
        cfg.Kd = 6;
        cfg.Q = 4;
        cfg.Lu = 1;
        cfg.G_theta = 24;
        cfg.G_r = 2;
        cfg.L_hat = 6;
        cfg.T = 2;
        cfg.C = 2;
        cfg.trials = 2;
        cfg.sweep_values = {20.0};
        cfg.methods = {"ls", "prop-init"};
        const auto a = results_to_csv(run_sweep(cfg));
        const auto b = results_to_csv(run_sweep(cfg));
        SELFTEST("sweep reruns byte-identical", a == b);
    }
    std::printf(failures ? "selftest: %d failure(s)\n" : "selftest: all checks passed\n",
                failures);
    return failures ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Near-field XL-MIMO channel estimation and JCDE simulator"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, manifest_path, out_prefix = "run";
    std::vector<std::string> overrides;
    std::vector<std::string> sweep_args;
    int threads = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key=value config file");
        sub->add_option("--from-manifest", manifest_path, "re-run from a manifest");
        sub->add_option("--set", overrides, "override: key=value")->take_all();
        sub->add_option("--out", out_prefix, "output prefix");
        sub->add_option("--threads", threads, "trial pool size (or XLMIMO_THREADS)");
        sub->add_option("--sweep", sweep_args, "axis values (e.g. snr -10:30:5)")->expected(2);
    };

    auto* initial_ce = app.add_subcommand("initial-ce", "initial channel estimation sweep");
    add_common(initial_ce);
    auto* jcde = app.add_subcommand("jcde", "joint channel and data estimation sweep");
    add_common(jcde);

    auto* leakage = app.add_subcommand("leakage-demo", "beam-domain amplitude dump");
    double leak_r = 5.0;
    double leak_theta = 20.0;
    leakage->add_option("--config", config_path, "key=value config file");
    leakage->add_option("--set", overrides, "override: key=value")->take_all();
    leakage->add_option("--out", out_prefix, "output prefix");
    leakage->add_option("--r", leak_r, "UE distance in meters (inf for far field)");
    leakage->add_option("--theta-deg", leak_theta, "angle of arrival in degrees");

    app.add_subcommand("selftest", "run built-in property checks");

    CLI11_PARSE(app, argc, argv);

    std::string command;
    for (int i = 1; i < argc; ++i) command += std::string(i > 1 ? " " : "") + argv[i];

    try {
        if (app.got_subcommand("selftest")) return run_selftest();

        bool sweep_configured = false;
        Config cfg = load_config(config_path, manifest_path, overrides, &sweep_configured);
        if (!sweep_args.empty()) {
            cfg.sweep_axis = sweep_args[0];
            cfg.sweep_values = parse_value_list(sweep_args[1]);
            sweep_configured = true;
        }

        if (app.got_subcommand("leakage-demo"))
            return run_leakage_demo(cfg, leak_r, leak_theta, out_prefix, command);

        if (app.got_subcommand("initial-ce")) {
            if (!sweep_configured) cfg.sweep_values = parse_value_list("-10:30:5");
            return run_experiment(cfg, {"ls", "psomp", "prop-init"}, out_prefix,
                                  thread_count(threads), command);
        }
        return run_experiment(
            cfg, {"prop-init", "lmmse-init", "prop-jcde", "genie-csi", "genie-data"}, out_prefix,
            thread_count(threads), command);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
