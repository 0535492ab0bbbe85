#include "xlmimo/jcde.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>

namespace xlmimo {

SubArrayPartition SubArrayPartition::even(int num_antennas, int num_subarrays) {
    require(num_subarrays >= 1 && num_subarrays <= num_antennas,
            "partition: C must be in [1, N]");
    require(num_antennas % num_subarrays == 0, "partition: C must divide N in even mode");
    SubArrayPartition p;
    p.num_antennas = num_antennas;
    p.count = num_subarrays;
    const int nc = num_antennas / num_subarrays;
    for (int c = 0; c < num_subarrays; ++c) {
        p.start.push_back(c * nc);
        p.size.push_back(nc);
    }
    return p;
}

void qam_denoise(Complex measurement, double var, const Constellation& c, Complex& mean,
                 double& out_var) {
    const int q = c.order;
    double dmin = std::numeric_limits<double>::infinity();
    thread_local std::vector<double> d;
    d.assign(size_t(q), 0.0);
    for (int i = 0; i < q; ++i) {
        d[size_t(i)] = std::norm(measurement - c.points[size_t(i)]) / var;
        dmin = std::min(dmin, d[size_t(i)]);
    }
    double z = 0.0, second = 0.0;
    Complex first{0.0, 0.0};
    for (int i = 0; i < q; ++i) {
        const double w = std::exp(-(d[size_t(i)] - dmin));
        z += w;
        first += w * c.points[size_t(i)];
        second += w * std::norm(c.points[size_t(i)]);
    }
    mean = first / z;
    out_var = second / z - std::norm(mean);
}

EpEngine::EpEngine(const CMat& Y_beam, const CMat& X_pilot, const Constellation& constellation,
                   const SubArrayPartition& partition, double noise_var, const JcdeConfig& cfg,
                   const ArrayGeometry& geom)
    : Y_(Y_beam),
      X_pilot_(X_pilot),
      constel_(constellation),
      part_(partition),
      noise_var_(noise_var),
      cfg_(cfg),
      geom_(geom),
      dft_(dft_matrix(int(Y_beam.rows()))) {
    num_rx_ = int(Y_.rows());
    num_ues_ = int(X_pilot_.rows());
    num_cols_ = int(Y_.cols());
    num_pilots_ = int(X_pilot_.cols());
    require(part_.num_antennas == num_rx_, "jcde: partition size mismatch");
    require(num_pilots_ <= num_cols_, "jcde: more pilot columns than columns");
    require(noise_var_ >= 0.0, "jcde: negative noise variance");
}

double EpEngine::clamp_var(double v) const {
    return std::min(std::max(v, cfg_.eps_var), cfg_.xi_max);
}

void EpEngine::divide(Complex post_mean, double post_var, Complex part_mean, double part_var,
                      Complex& out_mean, double& out_var) const {
    const double prec = 1.0 / post_var - 1.0 / part_var;
    const Complex mp = post_mean / post_var - part_mean / part_var;
    if (prec > 0.0) {
        // the mean keeps its exact value even when the variance clamps
        out_var = clamp_var(1.0 / prec);
        out_mean = mp / prec;
    } else if (prec < 0.0) {
        out_var = cfg_.eps_var; // negative-variance clamp
        out_mean = mp * out_var;
    } else {
        out_var = cfg_.xi_max; // degenerate division: uninformative
        out_mean = mp * out_var;
    }
}

namespace {

// Vectorized counterpart of EpEngine::divide on arrays.
void divide_arrays(const CArr& post_mean, const RArr& post_var, const CArr& part_mean,
                   const RArr& part_var, double eps_var, double xi_max, CArr& out_mean,
                   RArr& out_var) {
    const RArr prec = post_var.inverse() - part_var.inverse();
    const CArr mp = post_mean / post_var.cast<Complex>() - part_mean / part_var.cast<Complex>();
    out_var = (prec > 0.0)
                  .select(prec.inverse().cwiseMin(xi_max).cwiseMax(eps_var),
                          (prec < 0.0).select(RArr::Constant(prec.rows(), prec.cols(), eps_var),
                                              RArr::Constant(prec.rows(), prec.cols(), xi_max)));
    // exact mean where the division is proper, natural-parameter scaling at the clamps
    out_mean = (prec > 0.0).select(mp / prec.cast<Complex>(), mp * out_var.cast<Complex>());
}

void damp_into(double delta, const CArr& fresh_mean, const RArr& fresh_var, CArr& mean,
               RArr& var) {
    mean = delta * fresh_mean + (1.0 - delta) * mean;
    var = delta * fresh_var + (1.0 - delta) * var;
}

} // namespace

void EpEngine::init_from(const InitialEstimate& initial) {
    run_data_ = true;
    run_error_ = true;
    iter_ = 0;
    trace_.clear();

    const int c_cnt = part_.count;
    const double es = constel_.avg_energy;

    state_ = EpState{};
    state_.S_beam = dft_ * initial.H0_spatial;

    // data messages: pilots pinned, data symbols at the flat prior
    state_.x_q_mean.assign(size_t(c_cnt), CArr::Zero(num_ues_, num_cols_));
    state_.x_q_var.assign(size_t(c_cnt), RArr::Constant(num_ues_, num_cols_, es));
    CArr x0 = CArr::Zero(num_ues_, num_cols_);
    RArr v0 = RArr::Constant(num_ues_, num_cols_, es);
    x0.leftCols(num_pilots_) = X_pilot_.array();
    v0.leftCols(num_pilots_) = cfg_.eps_var;
    state_.x_v_mean.assign(size_t(c_cnt), x0);
    state_.x_v_var.assign(size_t(c_cnt), v0);
    state_.x_w_mean.assign(size_t(c_cnt), x0);
    state_.x_w_var.assign(size_t(c_cnt), v0);
    state_.x_q_mean_comb = x0;
    state_.x_q_var_comb = v0;
    state_.x_mean = x0;
    state_.x_var = v0;
    state_.x_b_mean = x0;
    state_.x_b_var = v0;

    // error prior variance: initial pilot misfit spread over users, floored
    double sigma_e0 = 0.01 * es;
    if (num_pilots_ > 0) {
        const CMat resid = Y_.leftCols(num_pilots_) - state_.S_beam * X_pilot_;
        const double per_entry = resid.squaredNorm() / double(num_rx_ * num_pilots_);
        const double scaled = std::max(per_entry - noise_var_, 0.0) / (double(num_ues_) * es);
        sigma_e0 = std::max(sigma_e0, scaled);
    }
    state_.sigma_e = RArr::Constant(num_rx_, num_ues_, sigma_e0);

    state_.e_q_mean.assign(size_t(num_cols_), CArr::Zero(num_rx_, num_ues_));
    state_.e_q_var.assign(size_t(num_cols_), RArr::Constant(num_rx_, num_ues_, cfg_.xi_max));
    state_.e_v_mean.assign(size_t(num_cols_), CArr::Zero(num_rx_, num_ues_));
    state_.e_v_var.assign(size_t(num_cols_), state_.sigma_e);
    state_.e_q_mean_comb = CArr::Zero(num_rx_, num_ues_);
    state_.e_q_var_comb = RArr::Constant(num_rx_, num_ues_, cfg_.xi_max);
    state_.e_mean = CArr::Zero(num_rx_, num_ues_);
    state_.e_var = state_.sigma_e;
    state_.e_b_mean = CArr::Zero(num_rx_, num_ues_);
    state_.e_b_var = state_.sigma_e;

    state_.theta_hat.assign(size_t(num_ues_), {});
    state_.r_hat.assign(size_t(num_ues_), {});
    state_.z_hat.assign(size_t(num_ues_), {});
    for (size_t u = 0; u < initial.path_set.per_ue.size() && u < size_t(num_ues_); ++u) {
        const auto& ue = initial.path_set.per_ue[u];
        state_.theta_hat[u].assign(ue.theta.begin(), ue.theta.end());
        state_.r_hat[u].assign(ue.r.begin(), ue.r.end());
        state_.z_hat[u].assign(ue.gain.begin(), ue.gain.end());
    }
}

void EpEngine::init_known_channel(const CMat& H_beam) {
    InitialEstimate zero;
    zero.H0_spatial = CMat::Zero(num_rx_, num_ues_);
    init_from(zero);
    state_.S_beam = H_beam;
    // residual error pinned to zero with vanishing uncertainty
    for (int k = 0; k < num_cols_; ++k) {
        state_.e_v_mean[size_t(k)].setZero();
        state_.e_v_var[size_t(k)].setConstant(cfg_.eps_var);
    }
    state_.e_mean.setZero();
    state_.e_var.setConstant(cfg_.eps_var);
    state_.sigma_e.setConstant(cfg_.eps_var);
    run_error_ = false;
}

void EpEngine::init_known_data(const InitialEstimate& initial, const CMat& X_true) {
    require(X_true.rows() == num_ues_ && X_true.cols() == num_cols_,
            "init_known_data: shape mismatch");
    init_from(initial);
    for (int c = 0; c < part_.count; ++c) {
        state_.x_v_mean[size_t(c)] = X_true.array();
        state_.x_v_var[size_t(c)].setConstant(cfg_.eps_var);
        state_.x_w_mean[size_t(c)] = X_true.array();
        state_.x_w_var[size_t(c)].setConstant(cfg_.eps_var);
        state_.x_q_mean[size_t(c)] = X_true.array();
        state_.x_q_var[size_t(c)].setConstant(cfg_.eps_var);
    }
    state_.x_mean = X_true.array();
    state_.x_var.setConstant(cfg_.eps_var);
    state_.x_q_mean_comb = X_true.array();
    state_.x_q_var_comb.setConstant(cfg_.eps_var);
    run_data_ = false;
}

void EpEngine::data_measurement_update_block(int c, int k) {
    const int s = part_.start[size_t(c)];
    const int nc = part_.size[size_t(c)];

    CMat h_v = state_.S_beam.block(s, 0, nc, num_ues_);
    h_v += state_.e_v_mean[size_t(k)].matrix().block(s, 0, nc, num_ues_);
    const RMat ev_var = state_.e_v_var[size_t(k)].matrix().block(s, 0, nc, num_ues_);

    CVec xv(num_ues_);
    RVec xvv(num_ues_);
    for (int u = 0; u < num_ues_; ++u) {
        xv(u) = state_.x_v_mean[size_t(c)](u, k);
        xvv(u) = state_.x_v_var[size_t(c)](u, k);
    }

    // Omega = sum_u { xi^vx h h^H + (xi^vx + |xv|^2) Xi^ve } + sigma^2 I
    CMat omega = h_v * xvv.asDiagonal() * h_v.adjoint();
    const RVec leak_coef = xvv + xv.cwiseAbs2();
    omega.diagonal() += (ev_var * leak_coef).cast<Complex>();
    omega.diagonal().array() += noise_var_;
    flops_.misc += double(nc) * nc * num_ues_;

    const double herm_err = (omega - omega.adjoint()).cwiseAbs().maxCoeff();
    require(herm_err <= 1e-10 * std::max(1.0, omega.cwiseAbs().maxCoeff()),
            "jcde: covariance lost Hermitian symmetry");

    Eigen::LLT<CMat> llt(omega);
    if (llt.info() != Eigen::Success) {
        const double jitter = 1e-12 * std::max(1.0, std::abs(omega.trace()) / nc);
        omega.diagonal().array() += jitter;
        llt.compute(omega);
        require(llt.info() == Eigen::Success, "jcde: covariance not positive definite");
    }
    flops_.lmmse_fact += double(nc) * nc * nc;

    CMat rhs(nc, num_ues_ + 1);
    rhs.leftCols(num_ues_) = h_v;
    rhs.col(num_ues_) = Y_.col(k).segment(s, nc);
    const CMat sol = llt.solve(rhs);
    flops_.lmmse_solve += double(num_ues_ + 1) * nc * nc;

    const auto w_h = sol.leftCols(num_ues_);
    const CVec w_y = sol.col(num_ues_);
    const CVec t1 = h_v.adjoint() * w_y;
    const CVec s_all = w_h * xv;
    const CVec t2 = h_v.adjoint() * s_all;

    for (int u = 0; u < num_ues_; ++u) {
        const Complex gamma = h_v.col(u).dot(w_h.col(u)); // h^H Omega^{-1} h
        const double gamma_re = std::max(gamma.real(), 1e-300);
        const Complex num = t1(u) - t2(u) + gamma * xv(u);
        state_.x_q_mean[size_t(c)](u, k) = num / gamma_re;
        state_.x_q_var[size_t(c)](u, k) = clamp_var(1.0 / gamma_re - xvv(u));
    }
}

void EpEngine::data_phase() {
    const int kd = num_cols_ - num_pilots_;
    if (kd <= 0) return;
    for (int c = 0; c < part_.count; ++c)
        for (int k = num_pilots_; k < num_cols_; ++k) data_measurement_update_block(c, k);

    // precision-weighted combining across sub-arrays (data columns only)
    auto data = [&](CArr& a) { return a.rightCols(kd); };
    auto datav = [&](RArr& a) { return a.rightCols(kd); };
    RArr prec = RArr::Zero(num_ues_, kd);
    CArr wsum = CArr::Zero(num_ues_, kd);
    for (int c = 0; c < part_.count; ++c) {
        prec += state_.x_q_var[size_t(c)].rightCols(kd).inverse();
        wsum += state_.x_q_mean[size_t(c)].rightCols(kd) /
                state_.x_q_var[size_t(c)].rightCols(kd).cast<Complex>();
    }
    datav(state_.x_q_var_comb) = prec.inverse().cwiseMin(cfg_.xi_max).cwiseMax(cfg_.eps_var);
    data(state_.x_q_mean_comb) = wsum * datav(state_.x_q_var_comb).cast<Complex>();

    // QAM posterior, then damped into the running posterior family
    CArr post_mean(num_ues_, kd);
    RArr post_var(num_ues_, kd);
    for (int j = 0; j < kd; ++j) {
        const int k = num_pilots_ + j;
        for (int u = 0; u < num_ues_; ++u) {
            Complex m;
            double v;
            qam_denoise(state_.x_q_mean_comb(u, k), state_.x_q_var_comb(u, k), constel_, m, v);
            post_mean(u, j) = m;
            post_var(u, j) = clamp_var(v);
        }
    }
    flops_.denoise += double(num_ues_) * kd * constel_.order;
    {
        CArr cur_m = state_.x_mean.rightCols(kd);
        RArr cur_v = state_.x_var.rightCols(kd);
        damp_into(cfg_.damping, post_mean, post_var, cur_m, cur_v);
        data(state_.x_mean) = cur_m;
        datav(state_.x_var) = cur_v;
    }

    // soft replicas: v (self-feedback suppressed), w (N_c-scaled), b (bookkeeping)
    for (int c = 0; c < part_.count; ++c) {
        CArr fresh_m;
        RArr fresh_v;
        divide_arrays(state_.x_mean.rightCols(kd), state_.x_var.rightCols(kd),
                      state_.x_q_mean[size_t(c)].rightCols(kd),
                      state_.x_q_var[size_t(c)].rightCols(kd), cfg_.eps_var, cfg_.xi_max, fresh_m,
                      fresh_v);
        CArr cur_m = state_.x_v_mean[size_t(c)].rightCols(kd);
        RArr cur_v = state_.x_v_var[size_t(c)].rightCols(kd);
        damp_into(cfg_.damping, fresh_m, fresh_v, cur_m, cur_v);
        state_.x_v_mean[size_t(c)].rightCols(kd) = cur_m;
        state_.x_v_var[size_t(c)].rightCols(kd) = cur_v;

        const double nc = double(part_.size[size_t(c)]);
        divide_arrays(state_.x_mean.rightCols(kd), state_.x_var.rightCols(kd),
                      state_.x_q_mean[size_t(c)].rightCols(kd),
                      RArr(nc * state_.x_q_var[size_t(c)].rightCols(kd)), cfg_.eps_var,
                      cfg_.xi_max, fresh_m, fresh_v);
        cur_m = state_.x_w_mean[size_t(c)].rightCols(kd);
        cur_v = state_.x_w_var[size_t(c)].rightCols(kd);
        damp_into(cfg_.damping, fresh_m, fresh_v, cur_m, cur_v);
        state_.x_w_mean[size_t(c)].rightCols(kd) = cur_m;
        state_.x_w_var[size_t(c)].rightCols(kd) = cur_v;
    }
    {
        CArr fresh_m;
        RArr fresh_v;
        divide_arrays(state_.x_mean.rightCols(kd), state_.x_var.rightCols(kd),
                      state_.x_q_mean_comb.rightCols(kd), state_.x_q_var_comb.rightCols(kd),
                      cfg_.eps_var, cfg_.xi_max, fresh_m, fresh_v);
        data(state_.x_b_mean) = fresh_m;
        datav(state_.x_b_var) = fresh_v;
    }
}

void EpEngine::error_phase() {
    const CArr s_arr = state_.S_beam.array();
    RArr prec_sum = RArr::Zero(num_rx_, num_ues_);
    CArr wsum = CArr::Zero(num_rx_, num_ues_);

    CArr w_mean(num_rx_, num_ues_);
    RArr w_var(num_rx_, num_ues_);
    for (int k = 0; k < num_cols_; ++k) {
        // expand the per-sub-array w replicas onto antenna rows
        for (int c = 0; c < part_.count; ++c) {
            const int s = part_.start[size_t(c)];
            const int nc = part_.size[size_t(c)];
            w_mean.middleRows(s, nc) =
                state_.x_w_mean[size_t(c)].col(k).transpose().replicate(nc, 1);
            w_var.middleRows(s, nc) =
                state_.x_w_var[size_t(c)].col(k).transpose().replicate(nc, 1);
        }
        const CArr& ev = state_.e_v_mean[size_t(k)];
        const RArr& evv = state_.e_v_var[size_t(k)];

        const CArr we = w_mean * ev;
        const RArr w2 = w_mean.abs2();
        const Eigen::VectorXcd s1 = we.matrix().rowwise().sum();
        const Eigen::VectorXcd s2 = (w_mean * s_arr).matrix().rowwise().sum();
        const RVec t1 = ((ev.abs2() + s_arr.abs2() + evv) * w_var).matrix().rowwise().sum();
        const RVec t2 = (evv * w2).matrix().rowwise().sum();

        CArr ytilde = (-s1.array() - s2.array() + Y_.col(k).array())
                          .replicate(1, num_ues_) +
                      we;
        RArr phi = (t1.array() + t2.array() + noise_var_).replicate(1, num_ues_) - evv * w2;
        phi = phi.cwiseMax(cfg_.eps_var);

        const auto informative = (w2 >= cfg_.eps_div);
        state_.e_q_mean[size_t(k)] =
            informative.select(w_mean.conjugate() * ytilde / w2.cwiseMax(1e-300).cast<Complex>(),
                               CArr::Zero(num_rx_, num_ues_));
        RArr qvar = phi / w2.cwiseMax(1e-300);
        state_.e_q_var[size_t(k)] = informative.select(
            qvar.cwiseMin(cfg_.xi_max).cwiseMax(cfg_.eps_var),
            RArr::Constant(num_rx_, num_ues_, cfg_.xi_max));

        prec_sum += state_.e_q_var[size_t(k)].inverse();
        wsum += state_.e_q_mean[size_t(k)] / state_.e_q_var[size_t(k)].cast<Complex>();
    }
    flops_.error_ic += double(num_rx_) * num_ues_ * num_cols_;

    state_.e_q_var_comb = prec_sum.inverse().cwiseMin(cfg_.xi_max).cwiseMax(cfg_.eps_var);
    state_.e_q_mean_comb = wsum * state_.e_q_var_comb.cast<Complex>();

    // Gaussian-prior shrinkage
    state_.e_mean = state_.sigma_e.cast<Complex>() * state_.e_q_mean_comb /
                    (state_.sigma_e + state_.e_q_var_comb).cast<Complex>();
    state_.e_var = (state_.sigma_e.inverse() + state_.e_q_var_comb.inverse())
                       .inverse()
                       .cwiseMax(cfg_.eps_var);

    for (int k = 0; k < num_cols_; ++k) {
        CArr fresh_m;
        RArr fresh_v;
        divide_arrays(state_.e_mean, state_.e_var, state_.e_q_mean[size_t(k)],
                      state_.e_q_var[size_t(k)], cfg_.eps_var, cfg_.xi_max, fresh_m, fresh_v);
        damp_into(cfg_.damping, fresh_m, fresh_v, state_.e_v_mean[size_t(k)],
                  state_.e_v_var[size_t(k)]);
    }
    {
        CArr fresh_m;
        RArr fresh_v;
        divide_arrays(state_.e_mean, state_.e_var, state_.e_q_mean_comb, state_.e_q_var_comb,
                      cfg_.eps_var, cfg_.xi_max, fresh_m, fresh_v);
        state_.e_b_mean = fresh_m;
        state_.e_b_var = fresh_v;
    }
}

void EpEngine::em_update() {
    state_.sigma_e = (state_.e_mean.abs2() + state_.e_var).cwiseMax(cfg_.eps_var);
}

void EpEngine::reinforce_model() {
    const int t = iter_ + 1;
    const GridSchedule sched_theta =
        GridSchedule::through(cfg_.sigma_theta_first, cfg_.sigma_theta_last, cfg_.iterations);
    const GridSchedule sched_r =
        GridSchedule::through(cfg_.sigma_r_first, cfg_.sigma_r_last, cfg_.iterations);
    const double s_theta = sched_theta.at(t);
    const double s_r = sched_r.at(t);

    const CMat h_beam = state_.S_beam + state_.e_mean.matrix();
    const CMat h_sp = dft_.adjoint() * h_beam;
    CMat s_new = state_.S_beam;

    for (int u = 0; u < num_ues_; ++u) {
        const int lu = int(state_.theta_hat[size_t(u)].size());
        if (lu == 0) continue;
        const Dictionary dict =
            build_refinement_grid(state_.theta_hat[size_t(u)], state_.r_hat[size_t(u)], s_theta,
                                  s_r, cfg_.gbar_theta, cfg_.gbar_r, geom_);
        const int block = cfg_.gbar_theta * cfg_.gbar_r;

        // one atom per path block, greedy over blocks by residual correlation
        std::vector<int> chosen(size_t(lu), -1);
        std::vector<int> sel_cols;
        CVec res = h_sp.col(u);
        CMat a_sel(num_rx_, lu);
        CVec gains;
        bool ok = true;
        for (int step = 0; step < lu; ++step) {
            int best_block = -1, best_col = -1;
            double best_score = -1.0;
            for (int l = 0; l < lu; ++l) {
                if (chosen[size_t(l)] >= 0) continue;
                for (int j = 0; j < block; ++j) {
                    const int col = l * block + j;
                    const double score = std::abs(dict.atoms.col(col).dot(res));
                    if (score > best_score) {
                        best_score = score;
                        best_block = l;
                        best_col = col;
                    }
                }
            }
            flops_.reinforce += double(lu - step) * block * num_rx_;
            if (best_block < 0) {
                ok = false;
                break;
            }
            chosen[size_t(best_block)] = best_col;
            sel_cols.push_back(best_col);
            const int ns = int(sel_cols.size());
            for (int i = 0; i < ns; ++i) a_sel.col(i) = dict.atoms.col(sel_cols[size_t(i)]);
            gains = a_sel.leftCols(ns).colPivHouseholderQr().solve(h_sp.col(u));
            res = h_sp.col(u) - a_sel.leftCols(ns) * gains;
        }
        if (!ok || !gains.allFinite()) continue; // singular refit: keep previous column

        const CVec s_sp = a_sel.leftCols(lu) * gains;
        s_new.col(u) = dft_ * s_sp;
        for (int i = 0; i < lu; ++i) {
            const auto& meta = dict.meta[size_t(sel_cols[size_t(i)])];
            // path identity follows the block, not the selection order
            const int path = meta.path;
            state_.theta_hat[size_t(u)][size_t(path)] = meta.theta;
            state_.r_hat[size_t(u)][size_t(path)] = meta.r;
            state_.z_hat[size_t(u)][size_t(path)] = gains(i);
        }
    }

    if (cfg_.rebase_errors) {
        const CArr shift = (s_new - state_.S_beam).array();
        state_.e_mean -= shift;
        state_.e_q_mean_comb -= shift;
        state_.e_b_mean -= shift;
        for (int k = 0; k < num_cols_; ++k) {
            state_.e_q_mean[size_t(k)] -= shift;
            state_.e_v_mean[size_t(k)] -= shift;
        }
    }
    state_.S_beam = s_new;
}

void EpEngine::check_finite(const char* phase) const {
    bool ok = state_.x_mean.allFinite() && state_.x_var.allFinite() &&
              state_.e_mean.allFinite() && state_.e_var.allFinite() &&
              state_.S_beam.allFinite() && state_.sigma_e.allFinite();
    for (int c = 0; ok && c < part_.count; ++c)
        ok = state_.x_v_mean[size_t(c)].allFinite() && state_.x_w_mean[size_t(c)].allFinite();
    if (!ok)
        throw JcdeDivergence(std::string("non-finite message after ") + phase + " at iteration " +
                             std::to_string(iter_ + 1));
}

void EpEngine::record_trace() {
    if (!truth_ || !truth_->H_beam) return;
    JcdeTracePoint p;
    p.iteration = iter_;
    const CMat h_hat = state_.S_beam + state_.e_mean.matrix();
    const double rel = (*truth_->H_beam - h_hat).squaredNorm() / truth_->H_beam->squaredNorm();
    p.nmse_db = rel <= 1e-30 ? -300.0 : lin2db(rel);
    p.ber = 0.0;
    if (truth_->data_indices) {
        const int kd = num_cols_ - num_pilots_;
        long errors = 0;
        for (int j = 0; j < kd; ++j)
            for (int u = 0; u < num_ues_; ++u) {
                const auto dec = hard_decision(state_.x_mean(u, num_pilots_ + j), constel_);
                errors += bit_errors(dec.index,
                                     (*truth_->data_indices)[size_t(j) * num_ues_ + u]);
            }
        p.ber = double(errors) / (double(kd) * num_ues_ * constel_.bits_per_symbol);
    }
    trace_.push_back(p);
}

void EpEngine::step() {
    if (run_data_) {
        data_phase();
        check_finite("data estimation");
    }
    if (run_error_) {
        error_phase();
        check_finite("error estimation");
        em_update();
        if (cfg_.update_model) {
            reinforce_model();
            check_finite("model reinforcement");
        }
    }
    ++iter_;
    record_trace();
}

JcdeOutput EpEngine::run() {
    for (int t = 0; t < cfg_.iterations; ++t) step();
    return finish();
}

JcdeOutput EpEngine::finish() const {
    JcdeOutput out;
    out.X_hat = state_.x_mean.matrix();
    out.H_beam_hat = state_.S_beam + state_.e_mean.matrix();
    out.H_spatial_hat = dft_.adjoint() * out.H_beam_hat;
    out.trace = trace_;
    out.flops = flops_;
    return out;
}

JcdeOutput run_jcde(const CMat& Y_beam, const CMat& X_pilot, const InitialEstimate& initial,
                    const Constellation& constellation, const SubArrayPartition& partition,
                    double noise_var, const JcdeConfig& cfg, const ArrayGeometry& geom,
                    const JcdeTruth* truth) {
    EpEngine engine(Y_beam, X_pilot, constellation, partition, noise_var, cfg, geom);
    engine.init_from(initial);
    if (truth) engine.set_truth(*truth);
    return engine.run();
}

JcdeOutput detect_with_known_channel(const CMat& Y_beam, const CMat& X_pilot,
                                     const CMat& H_beam, const Constellation& constellation,
                                     const SubArrayPartition& partition, double noise_var,
                                     const JcdeConfig& cfg, const ArrayGeometry& geom,
                                     const JcdeTruth* truth) {
    EpEngine engine(Y_beam, X_pilot, constellation, partition, noise_var, cfg, geom);
    engine.init_known_channel(H_beam);
    if (truth) engine.set_truth(*truth);
    return engine.run();
}

JcdeOutput estimate_with_known_data(const CMat& Y_beam, const CMat& X_pilot,
                                    const InitialEstimate& initial, const CMat& X_true,
                                    const Constellation& constellation,
                                    const SubArrayPartition& partition, double noise_var,
                                    const JcdeConfig& cfg, const ArrayGeometry& geom,
                                    const JcdeTruth* truth) {
    EpEngine engine(Y_beam, X_pilot, constellation, partition, noise_var, cfg, geom);
    engine.init_known_data(initial, X_true);
    if (truth) engine.set_truth(*truth);
    return engine.run();
}

} // namespace xlmimo
