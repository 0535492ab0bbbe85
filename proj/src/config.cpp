#include "xlmimo/config.hpp"

#include "xlmimo/common.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace xlmimo {

namespace {

int to_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const long x = std::stol(v, &pos);
        require(pos == v.size(), "config: trailing junk in " + key);
        return int(x);
    } catch (const std::exception&) {
        throw DomainError("config: cannot parse integer for " + key + ": '" + v + "'");
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        require(pos == v.size(), "config: trailing junk in " + key);
        return x;
    } catch (const std::exception&) {
        throw DomainError("config: cannot parse number for " + key + ": '" + v + "'");
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw DomainError("config: cannot parse bool for " + key + ": '" + v + "'");
}

std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::vector<double> parse_value_list(const std::string& text) {
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        const auto parts = [&] {
            std::vector<std::string> p;
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ':')) p.push_back(item);
            return p;
        }();
        require(parts.size() == 3, "value range must be lo:hi:step");
        const double lo = to_double(parts[0], "range");
        const double hi = to_double(parts[1], "range");
        const double step = to_double(parts[2], "range");
        require(step > 0.0 && hi >= lo, "bad value range");
        for (double v = lo; v <= hi + 1e-9 * step; v += step) out.push_back(v);
        return out;
    }
    for (const auto& item : split_commas(text)) out.push_back(to_double(item, "value list"));
    require(!out.empty(), "empty value list");
    return out;
}

void Config::set(const std::string& key, const std::string& value) {
    if (key == "system.N") N = to_int(value, key);
    else if (key == "system.U") U = to_int(value, key);
    else if (key == "system.fc_ghz") fc_ghz = to_double(value, key);
    else if (key == "frame.Kp") Kp = to_int(value, key);
    else if (key == "frame.Kd") Kd = to_int(value, key);
    else if (key == "frame.Q") Q = to_int(value, key);
    else if (key == "frame.pilot_mode") pilot_mode = value;
    else if (key == "channel.Lu") Lu = to_int(value, key);
    else if (key == "channel.Kf_db") Kf_db = to_double(value, key);
    else if (key == "channel.theta_min_deg") theta_min_deg = to_double(value, key);
    else if (key == "channel.theta_max_deg") theta_max_deg = to_double(value, key);
    else if (key == "channel.r_min_m") r_min_m = to_double(value, key);
    else if (key == "channel.r_max_m") r_max_m = to_double(value, key);
    else if (key == "channel.nlos_norm") nlos_norm = value;
    else if (key == "grid.G_theta") G_theta = to_int(value, key);
    else if (key == "grid.G_r") G_r = to_int(value, key);
    else if (key == "grid.gamma_coh") gamma_coh = to_double(value, key);
    else if (key == "init.L_hat") L_hat = to_int(value, key);
    else if (key == "jcde.T") T = to_int(value, key);
    else if (key == "jcde.damping") damping = to_double(value, key);
    else if (key == "jcde.C") C = to_int(value, key);
    else if (key == "jcde.Gbar_theta") Gbar_theta = to_int(value, key);
    else if (key == "jcde.Gbar_r") Gbar_r = to_int(value, key);
    else if (key == "jcde.sigma_theta_first_deg") sigma_theta_first_deg = to_double(value, key);
    else if (key == "jcde.sigma_theta_last_deg") sigma_theta_last_deg = to_double(value, key);
    else if (key == "jcde.sigma_r_first_m") sigma_r_first_m = to_double(value, key);
    else if (key == "jcde.sigma_r_last_m") sigma_r_last_m = to_double(value, key);
    else if (key == "jcde.eps_var") eps_var = to_double(value, key);
    else if (key == "jcde.xi_max") xi_max = to_double(value, key);
    else if (key == "jcde.update_model") update_model = to_bool(value, key);
    else if (key == "jcde.rebase_errors") rebase_errors = to_bool(value, key);
    else if (key == "snr_db") snr_db = to_double(value, key);
    else if (key == "sweep.axis") sweep_axis = value;
    else if (key == "sweep.values") sweep_values = parse_value_list(value);
    else if (key == "trials") trials = to_int(value, key);
    else if (key == "seed") seed = uint64_t(std::stoull(value));
    else if (key == "methods") methods = split_commas(value);
    else throw DomainError("config: unknown key '" + key + "'");
}

void Config::validate() const {
    require(N >= 1, "config: system.N must be >= 1");
    require(U >= 1, "config: system.U must be >= 1");
    require(fc_ghz > 0, "config: system.fc_ghz must be > 0");
    require(Kp >= 1, "config: frame.Kp must be >= 1");
    require(Kd >= 0, "config: frame.Kd must be >= 0");
    require(Q >= 4 && (Q & (Q - 1)) == 0, "config: frame.Q must be a power of two >= 4");
    int bits = 0;
    for (int q = Q; q > 1; q >>= 1) ++bits;
    require(bits % 2 == 0, "config: frame.Q must be square QAM (4, 16, 64, 256)");
    require(pilot_mode == "lowcoh" || pilot_mode == "orthogonal",
            "config: frame.pilot_mode must be lowcoh|orthogonal");
    if (pilot_mode == "orthogonal")
        require(Kp >= U, "config: orthogonal pilots need frame.Kp >= system.U");
    require(Lu >= 1, "config: channel.Lu must be >= 1");
    require(theta_max_deg > theta_min_deg, "config: empty angle range");
    require(theta_min_deg >= -90 && theta_max_deg <= 90, "config: angles must lie in [-90, 90]");
    require(r_min_m > 0 && r_max_m >= r_min_m, "config: distance range must lie in (0, inf)");
    require(nlos_norm == "per_ue" || nlos_norm == "total",
            "config: channel.nlos_norm must be per_ue|total");
    require(G_theta >= 1 && G_r >= 1, "config: grid sizes must be >= 1");
    require(gamma_coh > 0 && gamma_coh < 1, "config: grid.gamma_coh must be in (0,1)");
    require(L_hat >= 1, "config: init.L_hat must be >= 1");
    require(L_hat <= G_theta * G_r, "config: init.L_hat exceeds grid size");
    require(T >= 1, "config: jcde.T must be >= 1");
    require(damping > 0 && damping <= 1, "config: jcde.damping must be in (0,1]");
    require(C >= 1 && C <= N, "config: jcde.C must be in [1, N]");
    require(N % C == 0, "config: jcde.C must divide system.N in even mode");
    require(Gbar_theta >= 1 && Gbar_r >= 1, "config: refinement grid sizes must be >= 1");
    require(sigma_theta_first_deg >= sigma_theta_last_deg && sigma_theta_last_deg >= 0,
            "config: sigma_theta schedule must be non-increasing and non-negative");
    require(sigma_r_first_m >= sigma_r_last_m && sigma_r_last_m >= 0,
            "config: sigma_r schedule must be non-increasing and non-negative");
    require(eps_var > 0 && xi_max > eps_var, "config: bad variance clamps");
    require(sweep_axis == "snr" || sweep_axis == "kp" || sweep_axis == "nc",
            "config: sweep.axis must be snr|kp|nc");
    require(!sweep_values.empty(), "config: empty sweep.values");
    if (sweep_axis == "kp")
        for (double v : sweep_values)
            require(v >= 1 && v == std::floor(v), "config: kp sweep values must be integers >= 1");
    if (sweep_axis == "nc")
        for (double v : sweep_values) {
            require(v >= 1 && v == std::floor(v) && N % int(v) == 0,
                    "config: nc sweep values must divide system.N");
        }
    require(trials >= 1, "config: trials must be >= 1");
    const std::set<std::string> known = {"ls",        "psomp",     "prop-init", "lmmse-init",
                                         "prop-jcde", "genie-csi", "genie-data"};
    for (const auto& m : methods)
        require(known.count(m) == 1, "config: unknown method '" + m + "'");
}

Config Config::from_text(const std::string& text) {
    Config cfg;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, "config: expected key=value, got '" + line + "'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    require(bool(in), "config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void Config::apply_overrides(const std::vector<std::string>& kvs) {
    for (const auto& kv : kvs) {
        const auto eq = kv.find('=');
        require(eq != std::string::npos, "override must be key=value: '" + kv + "'");
        set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
}

std::string Config::serialize() const {
    std::ostringstream out;
    out << "system.N=" << N << "\n";
    out << "system.U=" << U << "\n";
    out << "system.fc_ghz=" << fmt(fc_ghz) << "\n";
    out << "frame.Kp=" << Kp << "\n";
    out << "frame.Kd=" << Kd << "\n";
    out << "frame.Q=" << Q << "\n";
    out << "frame.pilot_mode=" << pilot_mode << "\n";
    out << "channel.Lu=" << Lu << "\n";
    out << "channel.Kf_db=" << fmt(Kf_db) << "\n";
    out << "channel.theta_min_deg=" << fmt(theta_min_deg) << "\n";
    out << "channel.theta_max_deg=" << fmt(theta_max_deg) << "\n";
    out << "channel.r_min_m=" << fmt(r_min_m) << "\n";
    out << "channel.r_max_m=" << fmt(r_max_m) << "\n";
    out << "channel.nlos_norm=" << nlos_norm << "\n";
    out << "grid.G_theta=" << G_theta << "\n";
    out << "grid.G_r=" << G_r << "\n";
    out << "grid.gamma_coh=" << fmt(gamma_coh) << "\n";
    out << "init.L_hat=" << L_hat << "\n";
    out << "jcde.T=" << T << "\n";
    out << "jcde.damping=" << fmt(damping) << "\n";
    out << "jcde.C=" << C << "\n";
    out << "jcde.Gbar_theta=" << Gbar_theta << "\n";
    out << "jcde.Gbar_r=" << Gbar_r << "\n";
    out << "jcde.sigma_theta_first_deg=" << fmt(sigma_theta_first_deg) << "\n";
    out << "jcde.sigma_theta_last_deg=" << fmt(sigma_theta_last_deg) << "\n";
    out << "jcde.sigma_r_first_m=" << fmt(sigma_r_first_m) << "\n";
    out << "jcde.sigma_r_last_m=" << fmt(sigma_r_last_m) << "\n";
    out << "jcde.eps_var=" << fmt(eps_var) << "\n";
    out << "jcde.xi_max=" << fmt(xi_max) << "\n";
    out << "jcde.update_model=" << (update_model ? "true" : "false") << "\n";
    out << "jcde.rebase_errors=" << (rebase_errors ? "true" : "false") << "\n";
    out << "snr_db=" << fmt(snr_db) << "\n";
    out << "sweep.axis=" << sweep_axis << "\n";
    out << "sweep.values=";
    for (size_t i = 0; i < sweep_values.size(); ++i)
        out << (i ? "," : "") << fmt(sweep_values[i]);
    out << "\n";
    out << "trials=" << trials << "\n";
    out << "seed=" << seed << "\n";
    out << "methods=";
    for (size_t i = 0; i < methods.size(); ++i) out << (i ? "," : "") << methods[i];
    out << "\n";
    return out.str();
}

} // namespace xlmimo
