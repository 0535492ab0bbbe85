#include "xlmimo/frames.hpp"
#include "xlmimo/jcde.hpp"
#include "xlmimo/metrics.hpp"
#include "xlmimo/rng.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

using namespace xlmimo;

namespace {

struct SmallScene {
    ArrayGeometry geom;
    ChannelRealization ch;
    Constellation constel;
    Frame frame;
    ReceivedSignal rx;
    SubArrayPartition part;
    JcdeConfig cfg;
};

SmallScene make_scene(int n, int num_ues, int kp, int kd, int q, int c, double snr_db,
                      uint64_t seed, int paths_per_ue = 1) {
    SmallScene s{ArrayGeometry::from_carrier_ghz(n, 100.0),
                 {},
                 Constellation::qam(q),
                 {},
                 {},
                 SubArrayPartition::even(n, c),
                 {}};
    ChannelParams p;
    p.num_ues = num_ues;
    p.paths_per_ue = paths_per_ue;
    p.r_min = 1.0;
    p.r_max = 8.0;
    s.ch = generate_channel(s.geom, p, seed);
    s.frame = build_frame(num_ues, kp, kd, s.constel, seed + 1);
    s.rx = transmit(s.ch.H_spatial, s.frame.X, snr_db, seed + 2);
    s.cfg.iterations = 8;
    s.cfg.gbar_theta = 3;
    s.cfg.gbar_r = 3;
    return s;
}

InitialEstimate zero_initial(int n, int num_ues) {
    InitialEstimate init;
    init.H0_spatial = CMat::Zero(n, num_ues);
    init.path_set.per_ue.resize(size_t(num_ues));
    return init;
}

} // namespace

TEST_SUITE_BEGIN("jcde");

TEST_CASE("qam denoiser matches the exhaustive posterior sum") {
    const auto c4 = Constellation::qam(4);
    Complex mean;
    double var;
    qam_denoise(Complex(0.3, 0.1), 0.5, c4, mean, var);
    // frozen values from the direct 4-term enumeration
    CHECK(std::abs(mean - Complex(0.488115636128287, 0.194831980512784)) < 1e-12);
    CHECK(var == doctest::Approx(0.723783625136545).epsilon(1e-12));

    Rng rng(4);
    for (int q : {4, 16, 64}) {
        const auto c = Constellation::qam(q);
        for (int rep = 0; rep < 50; ++rep) {
            const Complex y = rng.cnormal(2.0);
            const double v = 0.02 + rng.uniform();
            qam_denoise(y, v, c, mean, var);
            Complex num{0, 0};
            double den = 0, sec = 0;
            for (const auto& p : c.points) {
                const double w = std::exp(-std::norm(y - p) / v);
                num += w * p;
                den += w;
                sec += w * std::norm(p);
            }
            CHECK(std::abs(mean - num / den) < 1e-12);
            CHECK(std::abs(var - (sec / den - std::norm(num / den))) < 1e-12);
        }
    }
}

TEST_CASE("denoiser limits: confident measurement and flat measurement") {
    const auto c = Constellation::qam(16);
    Complex mean;
    double var;
    qam_denoise(c.points[5], 1e-9, c, mean, var);
    CHECK(std::abs(mean - c.points[5]) < 1e-9);
    CHECK(var < 1e-8);

    qam_denoise(Complex(0.05, -0.02), 1e9, c, mean, var);
    CHECK(std::abs(mean) < 1e-6);                       // constellation mean
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));   // E_s
}

TEST_CASE("sub-array LMMSE matches the dense Bayesian oracle") {
    Rng rng(19);
    for (int rep = 0; rep < 30; ++rep) {
        const int nc = 2 + int(rng.uniform_int(7));  // N_c <= 8
        const int num_ues = 1 + int(rng.uniform_int(4)); // U <= 4
        auto scene = make_scene(nc, num_ues, num_ues, 3, 4, 1, 15.0, 100 + uint64_t(rep));

        EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part,
                     scene.rx.noise_var, scene.cfg, scene.geom);
        eng.init_from(zero_initial(nc, num_ues));

        // randomize the replica state so the oracle sees a generic instance
        auto& st = eng.state();
        const int k = scene.frame.K_p; // first data column
        for (int u = 0; u < num_ues; ++u) {
            st.x_v_mean[0](u, k) = rng.cnormal(1.0);
            st.x_v_var[0](u, k) = 0.1 + rng.uniform();
        }
        st.e_v_mean[size_t(k)] = rng.cnormal_matrix(nc, num_ues, 0.3).array();
        st.e_v_var[size_t(k)] = RArr::Constant(nc, num_ues, 0.0) +
                                0.05 * (RArr::Random(nc, num_ues) + 1.1);
        st.S_beam = rng.cnormal_matrix(nc, num_ues, 0.5);

        eng.data_measurement_update_block(0, k);

        CMat h_rep = st.S_beam + st.e_v_mean[size_t(k)].matrix();
        CVec xm(num_ues);
        RVec xv(num_ues);
        for (int u = 0; u < num_ues; ++u) {
            xm(u) = st.x_v_mean[0](u, k);
            xv(u) = st.x_v_var[0](u, k);
        }
        const auto oracle = test::dense_lmmse_oracle(scene.rx.Y_beam.col(k), h_rep, xm, xv,
                                                     st.e_v_var[size_t(k)].matrix(),
                                                     scene.rx.noise_var);
        for (int u = 0; u < num_ues; ++u) {
            CHECK(std::abs(st.x_q_mean[0](u, k) - oracle.x_q_mean(u)) <
                  1e-9 * std::max(1.0, std::abs(oracle.x_q_mean(u))));
            CHECK(st.x_q_var[0](u, k) ==
                  doctest::Approx(std::clamp(oracle.x_q_var(u), 1e-12, 1e6)).epsilon(1e-9));
        }
    }
}

TEST_CASE("single-user full-array update reduces to the direct MMSE formula") {
    // U=1, E=0, N_c=N: x_q must match h^H (hh^H xi + s2 I)^{-1} y / gamma
    auto scene = make_scene(8, 1, 1, 2, 4, 1, 20.0, 7);
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_from(zero_initial(8, 1));
    auto& st = eng.state();
    const int k = 1;
    st.S_beam = scene.ch.H_beam; // known channel
    st.e_v_mean[size_t(k)].setZero();
    st.e_v_var[size_t(k)].setConstant(1e-12);
    st.x_v_mean[0](0, k) = 0.0;
    st.x_v_var[0](0, k) = 1.0;

    eng.data_measurement_update_block(0, k);

    const CVec h = scene.ch.H_beam.col(0);
    const CMat omega = h * h.adjoint() + scene.rx.noise_var * CMat::Identity(8, 8) +
                       1e-12 * CMat::Identity(8, 8);
    const CMat omega_inv = omega.inverse();
    const double gamma = (h.adjoint() * omega_inv * h)(0, 0).real();
    const Complex expect = (h.adjoint() * omega_inv * scene.rx.Y_beam.col(k))(0, 0) / gamma;
    CHECK(std::abs(st.x_q_mean[0](0, k) - expect) < 1e-8 * std::max(1.0, std::abs(expect)));
    CHECK(st.x_q_var[0](0, k) == doctest::Approx(1.0 / gamma - 1.0).epsilon(1e-6));
}

TEST_CASE("perfect replicas cancel all interference") {
    auto scene = make_scene(8, 3, 3, 3, 4, 1, std::numeric_limits<double>::infinity(), 9);
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part,
                 1e-9, scene.cfg, scene.geom);
    eng.init_from(zero_initial(8, 3));
    auto& st = eng.state();
    const int k = scene.frame.K_p;
    st.S_beam = scene.ch.H_beam;
    st.e_v_mean[size_t(k)].setZero();
    st.e_v_var[size_t(k)].setConstant(1e-12);
    for (int u = 0; u < 3; ++u) {
        st.x_v_mean[0](u, k) = scene.frame.X(u, k);
        st.x_v_var[0](u, k) = 1e-12;
    }
    eng.data_measurement_update_block(0, k);
    // noiseless + perfect replicas: the estimate is the true symbol
    for (int u = 0; u < 3; ++u)
        CHECK(std::abs(st.x_q_mean[0](u, k) - scene.frame.X(u, k)) < 1e-5);
}

TEST_CASE("scalar sub-arrays follow the MRC-style closed form") {
    auto scene = make_scene(4, 2, 2, 2, 4, 4, 18.0, 11); // N_c = 1
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_from(zero_initial(4, 2));
    auto& st = eng.state();
    const int k = scene.frame.K_p;
    st.S_beam = scene.ch.H_beam;
    for (int c = 0; c < 4; ++c) {
        st.e_v_mean[size_t(k)].setZero();
        st.e_v_var[size_t(k)].setConstant(1e-12);
        st.x_v_mean[size_t(c)].col(k).setZero();
        st.x_v_var[size_t(c)].col(k).setConstant(1.0);
        eng.data_measurement_update_block(c, k);
    }
    // N_c=1: Omega is scalar; verify user 0 of block 2 against the formula
    const int c = 2, u = 0;
    const Complex h = scene.ch.H_beam(c, u);
    double omega = scene.rx.noise_var;
    for (int v = 0; v < 2; ++v) omega += std::norm(scene.ch.H_beam(c, v)) * 1.0;
    const double gamma = std::norm(h) / omega;
    const Complex ytilde = scene.rx.Y_beam(c, k); // zero-mean replicas cancel nothing
    const Complex expect = std::conj(h) * (1.0 / omega) * ytilde / gamma;
    CHECK(std::abs(st.x_q_mean[size_t(c)](u, k) - expect) < 1e-9);
}

TEST_CASE("EP division round-trips to the posterior when unclamped") {
    auto scene = make_scene(16, 3, 3, 8, 16, 2, 18.0, 13);
    scene.cfg.damping = 1.0; // stored replicas are the fresh divisions
    scene.cfg.iterations = 3;
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_from(zero_initial(16, 3));
    eng.step();
    eng.step();

    const auto& st = eng.state();
    int checked = 0;
    for (int c = 0; c < 2; ++c)
        for (int k = 3; k < 11; ++k)
            for (int u = 0; u < 3; ++u) {
                const double vv = st.x_v_var[size_t(c)](u, k);
                const double qv = st.x_q_var[size_t(c)](u, k);
                if (vv <= 2e-12 || vv >= 0.99e6) continue; // clamped: skip
                if (qv <= 2e-12 || qv >= 0.99e6) continue;
                const double prec = 1.0 / vv + 1.0 / st.x_q_var[size_t(c)](u, k);
                CHECK(prec == doctest::Approx(1.0 / st.x_var(u, k)).epsilon(1e-9));
                const Complex mean_prec =
                    st.x_v_mean[size_t(c)](u, k) / vv +
                    st.x_q_mean[size_t(c)](u, k) / st.x_q_var[size_t(c)](u, k);
                const Complex recomb = mean_prec / prec;
                CHECK(std::abs(recomb - st.x_mean(u, k)) < 1e-9 * std::max(1.0, std::abs(recomb)));
                ++checked;
            }
    CHECK(checked > 10);
}

TEST_CASE("message variances stay inside the clamp window") {
    auto scene = make_scene(16, 4, 4, 10, 16, 2, 8.0, 17);
    scene.cfg.iterations = 5;
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_from(zero_initial(16, 4));
    for (int t = 0; t < 5; ++t) {
        eng.step();
        const auto& st = eng.state();
        for (int c = 0; c < 2; ++c) {
            CHECK(st.x_v_var[size_t(c)].minCoeff() >= 1e-12);
            CHECK(st.x_v_var[size_t(c)].maxCoeff() <= 1e6);
            CHECK(st.x_w_var[size_t(c)].minCoeff() >= 1e-12);
            CHECK(st.x_w_var[size_t(c)].maxCoeff() <= 1e6);
        }
        CHECK(st.e_var.minCoeff() > 0.0);
        for (int k = 0; k < 14; ++k) {
            CHECK(st.e_v_var[size_t(k)].minCoeff() >= 1e-12);
            CHECK(st.e_v_var[size_t(k)].maxCoeff() <= 1e6);
        }
    }
}

TEST_CASE("damped update is the midpoint of consecutive undamped updates") {
    auto scene = make_scene(16, 3, 3, 6, 4, 2, 16.0, 21);
    scene.cfg.update_model = false;

    JcdeConfig undamped = scene.cfg;
    undamped.damping = 1.0;
    EpEngine a(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
               undamped, scene.geom);
    a.init_from(zero_initial(16, 3));
    a.step();
    const EpState mid = a.state(); // state after one undamped sweep
    const CArr m1 = mid.x_mean;
    const RArr m1_var = mid.x_var;
    a.step();
    const CArr m2 = a.state().x_mean; // second undamped posterior
    const RArr m2_var = a.state().x_var;

    JcdeConfig damped = scene.cfg;
    damped.damping = 0.5;
    EpEngine b(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
               damped, scene.geom);
    b.init_from(zero_initial(16, 3));
    b.state() = mid; // continue from the identical state
    b.step();

    // the damped posterior lands on the elementwise midpoint: its fresh value
    // is computed from the same state that produced m2
    const CArr expect = 0.5 * m2 + 0.5 * m1;
    const RArr expect_var = 0.5 * m2_var + 0.5 * m1_var;
    CHECK((b.state().x_mean - expect).abs().maxCoeff() < 1e-12);
    CHECK((b.state().x_var - expect_var).abs().maxCoeff() < 1e-12);
}

TEST_CASE("pilot columns stay pinned through all iterations") {
    auto scene = make_scene(16, 4, 4, 8, 16, 2, 14.0, 23);
    scene.cfg.iterations = 6;
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_from(zero_initial(16, 4));
    for (int t = 0; t < 6; ++t) {
        eng.step();
        const CMat xp = eng.state().x_mean.matrix().leftCols(4);
        CHECK((xp - scene.frame.X_p).cwiseAbs().maxCoeff() == 0.0);
        for (int c = 0; c < 2; ++c) {
            const CMat xv = eng.state().x_v_mean[size_t(c)].matrix().leftCols(4);
            CHECK((xv - scene.frame.X_p).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("with one sub-array the combined messages equal the block messages") {
    auto scene = make_scene(8, 2, 2, 5, 4, 1, 15.0, 27);
    scene.cfg.update_model = false;
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_from(zero_initial(8, 2));
    eng.step();
    const auto& st = eng.state();
    for (int k = 2; k < 7; ++k)
        for (int u = 0; u < 2; ++u) {
            CHECK(st.x_q_mean_comb(u, k) == st.x_q_mean[0](u, k));
            CHECK(st.x_q_var_comb(u, k) == doctest::Approx(st.x_q_var[0](u, k)).epsilon(1e-12));
        }
}

TEST_CASE("error measurement matches a straight-line recomputation") {
    // random small instance: N=4, U=2, K=3
    auto scene = make_scene(4, 2, 1, 2, 4, 2, 12.0, 29);
    scene.cfg.update_model = false;
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_known_data(zero_initial(4, 2), scene.frame.X);

    Rng rng(31);
    auto& st = eng.state();
    st.S_beam = rng.cnormal_matrix(4, 2, 0.4);
    for (int c = 0; c < 2; ++c) {
        st.x_w_mean[size_t(c)] = rng.cnormal_matrix(2, 3, 1.0).array();
        st.x_w_var[size_t(c)] = 0.1 * (RArr::Random(2, 3) + 1.5);
    }
    for (int k = 0; k < 3; ++k) {
        st.e_v_mean[size_t(k)] = rng.cnormal_matrix(4, 2, 0.2).array();
        st.e_v_var[size_t(k)] = 0.05 * (RArr::Random(4, 2) + 1.5);
    }
    const EpState snap = st; // inputs for the oracle

    eng.error_phase();

    // straight-line transcription of the scalar soft-IC equations
    for (int k = 0; k < 3; ++k)
        for (int n = 0; n < 4; ++n) {
            const int c = n / 2; // partition blocks of 2 antennas
            for (int u = 0; u < 2; ++u) {
                Complex ytilde = scene.rx.Y_beam(n, k);
                for (int v = 0; v < 2; ++v) {
                    if (v != u) ytilde -= snap.x_w_mean[size_t(c)](v, k) *
                                          snap.e_v_mean[size_t(k)](n, v);
                    ytilde -= snap.x_w_mean[size_t(c)](v, k) * snap.S_beam(n, v);
                }
                double phi = scene.rx.noise_var;
                for (int v = 0; v < 2; ++v) {
                    phi += (std::norm(snap.e_v_mean[size_t(k)](n, v)) +
                            std::norm(snap.S_beam(n, v)) + snap.e_v_var[size_t(k)](n, v)) *
                           snap.x_w_var[size_t(c)](v, k);
                    if (v != u)
                        phi += snap.e_v_var[size_t(k)](n, v) *
                               std::norm(snap.x_w_mean[size_t(c)](v, k));
                }
                const Complex w = snap.x_w_mean[size_t(c)](u, k);
                const Complex eq = std::conj(w) * ytilde / std::norm(w);
                const double xiq = phi / std::norm(w);
                CHECK(std::abs(eng.state().e_q_mean[size_t(k)](n, u) - eq) < 1e-12);
                CHECK(eng.state().e_q_var[size_t(k)](n, u) ==
                      doctest::Approx(std::clamp(xiq, 1e-12, 1e6)).epsilon(1e-12));
            }
        }
}

TEST_CASE("scalar deconvolution: single user, known symbol, no model") {
    // K=1 pilot column, S=0: e_q = y / x with variance sigma^2 / |x|^2
    auto scene = make_scene(4, 1, 1, 0, 4, 1, 10.0, 33);
    scene.cfg.update_model = false;
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_known_data(zero_initial(4, 1), scene.frame.X);
    auto& st = eng.state();
    st.S_beam.setZero();
    for (int k = 0; k < 1; ++k) {
        st.e_v_mean[size_t(k)].setZero();
        st.e_v_var[size_t(k)].setConstant(1e-12);
    }
    eng.error_phase();
    const Complex x = scene.frame.X(0, 0);
    for (int n = 0; n < 4; ++n) {
        CHECK(std::abs(st.e_q_mean[0](n, 0) - scene.rx.Y_beam(n, 0) / x) < 1e-9);
        CHECK(st.e_q_var[0](n, 0) ==
              doctest::Approx(scene.rx.noise_var / std::norm(x)).epsilon(1e-6));
    }
}

TEST_CASE("error shrinkage limits") {
    auto scene = make_scene(4, 1, 1, 1, 4, 1, 10.0, 37);
    scene.cfg.update_model = false;
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_known_data(zero_initial(4, 1), scene.frame.X);
    auto& st = eng.state();

    SUBCASE("zero prior variance fully shrinks") {
        st.sigma_e.setConstant(1e-12);
        eng.error_phase();
        CHECK(st.e_mean.abs().maxCoeff() < 1e-9);
    }
    SUBCASE("huge prior variance passes the measurement through") {
        st.sigma_e.setConstant(1e9);
        eng.error_phase();
        CHECK((st.e_mean - st.e_q_mean_comb).abs().maxCoeff() <
              1e-5 * std::max(1.0, st.e_q_mean_comb.abs().maxCoeff()));
    }
    SUBCASE("equal prior and measurement variances halve the mean") {
        const EpState snap = st;
        eng.error_phase();
        const RArr captured_var = st.e_q_var_comb;
        const CArr captured_mean = st.e_q_mean_comb;
        st = snap; // replay the phase with sigma_e = xi^{q,e}
        st.sigma_e = captured_var;
        eng.error_phase();
        CHECK((st.e_mean - 0.5 * captured_mean).abs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("EM update is the posterior second moment with a floor") {
    auto scene = make_scene(4, 1, 1, 1, 4, 1, 10.0, 41);
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_from(zero_initial(4, 1));
    auto& st = eng.state();
    st.e_mean.setZero();
    st.e_var.setConstant(0.1);
    eng.em_update();
    CHECK((st.sigma_e - 0.1).abs().maxCoeff() < 1e-15);

    st.e_mean.setConstant(Complex(1.0, 0.0));
    st.e_var.setConstant(0.0);
    eng.em_update();
    CHECK((st.sigma_e - 1.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("EM maximizes the variance ELBO term") {
    // F(s) = -(ln s + m / s) is maximized at s = m; finite differences confirm
    const double m = 0.7; // |e|^2 + xi
    const auto f = [&](double s) { return -(std::log(s) + m / s); };
    const double star = m;
    for (double ds : {1e-3, 1e-2, 0.1}) {
        CHECK(f(star) >= f(star + ds));
        CHECK(f(star) >= f(star - ds));
    }
}

namespace {

// engine wired to a handcrafted single-UE channel whose model centers are on
// the refinement grid
struct ReinforceFixture {
    ArrayGeometry geom;
    CMat H_spatial, H_beam;
    std::vector<double> theta, r;
    std::vector<Complex> z;
    Constellation constel = Constellation::qam(4);
    Frame frame;
    ReceivedSignal rx;

    ReinforceFixture(int n, std::vector<double> theta_in, std::vector<double> r_in,
                     std::vector<Complex> z_in)
        : geom(ArrayGeometry::from_carrier_ghz(n, 100.0)),
          theta(std::move(theta_in)),
          r(std::move(r_in)),
          z(std::move(z_in)) {
        H_spatial = CMat::Zero(n, 1);
        for (size_t l = 0; l < theta.size(); ++l)
            H_spatial.col(0) += array_response(geom, theta[l], r[l]) * z[l];
        H_beam = beam_transform(H_spatial);
        frame = build_frame(1, 2, 2, constel, 5);
        rx = transmit(H_spatial, frame.X, 30.0, 6);
    }

    EpEngine engine(const JcdeConfig& cfg) {
        EpEngine eng(rx.Y_beam, frame.X_p, constel, SubArrayPartition::even(geom.num_antennas, 1),
                     rx.noise_var, cfg, geom);
        InitialEstimate init;
        init.H0_spatial = H_spatial;
        init.path_set.per_ue.resize(1);
        init.path_set.per_ue[0].theta = theta;
        init.path_set.per_ue[0].r = r;
        init.path_set.per_ue[0].gain = z;
        eng.init_from(init);
        eng.state().e_mean.setZero(); // H(t-1) = S = truth
        return eng;
    }
};

} // namespace

TEST_CASE("reinforcement keeps an exact single-atom estimate") {
    ReinforceFixture fx(32, {deg2rad(-20.0)}, {3.0}, {Complex(0.8, -0.3)});
    JcdeConfig cfg;
    cfg.iterations = 4;
    cfg.gbar_theta = 5;
    cfg.gbar_r = 5;
    cfg.sigma_r_first = 0.4;
    cfg.sigma_r_last = 0.2;
    auto eng = fx.engine(cfg);
    eng.reinforce_model();
    CHECK((eng.state().S_beam - fx.H_beam).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(eng.state().theta_hat[0][0] == doctest::Approx(deg2rad(-20.0)));
    CHECK(eng.state().r_hat[0][0] == doctest::Approx(3.0));
}

TEST_CASE("per-path selection matches the block-exhaustive oracle") {
    // angle-identifiable two-path setup: blocks shrink to angle-only grids
    ReinforceFixture fx(32, {deg2rad(-30.0), deg2rad(10.0)}, {3.0, 5.0},
                        {Complex(0.7, 0.1), Complex(-0.2, 0.55)});
    JcdeConfig cfg;
    cfg.iterations = 4;
    cfg.gbar_theta = 5;
    cfg.gbar_r = 5;
    cfg.sigma_r_first = 0.0; // distance fixed at the centers
    cfg.sigma_r_last = 0.0;
    auto eng = fx.engine(cfg);
    eng.reinforce_model();
    CHECK((eng.state().S_beam - fx.H_beam).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(eng.state().theta_hat[0][0] == doctest::Approx(deg2rad(-30.0)));
    CHECK(eng.state().theta_hat[0][1] == doctest::Approx(deg2rad(10.0)));

    // exhaustive joint LS over the two 25-atom blocks agrees
    const auto sched_t = GridSchedule::through(cfg.sigma_theta_first, cfg.sigma_theta_last, 4);
    const auto dict = build_refinement_grid({deg2rad(-30.0), deg2rad(10.0)}, {3.0, 5.0},
                                            sched_t.at(1), 0.0, 5, 5, fx.geom);
    const CVec target = fx.H_spatial.col(0);
    double best = std::numeric_limits<double>::infinity();
    int best_i = -1, best_j = -1;
    for (int i = 0; i < 25; ++i)
        for (int j = 25; j < 50; ++j) {
            CMat a(32, 2);
            a.col(0) = dict.atoms.col(i);
            a.col(1) = dict.atoms.col(j);
            const CVec coef = a.colPivHouseholderQr().solve(target);
            const double res = (target - a * coef).squaredNorm();
            if (res < best) {
                best = res;
                best_i = i;
                best_j = j;
            }
        }
    CHECK(dict.meta[size_t(best_i)].theta == doctest::Approx(eng.state().theta_hat[0][0]));
    CHECK(dict.meta[size_t(best_j)].theta == doctest::Approx(eng.state().theta_hat[0][1]));
}

TEST_CASE("reinforcement resolves distance once the aperture supports it") {
    // N=128 at 100 GHz puts r in [1, 8] well inside the near field
    ReinforceFixture fx(128, {deg2rad(15.0)}, {2.5}, {Complex(1.0, 0.2)});
    JcdeConfig cfg;
    cfg.iterations = 4;
    cfg.gbar_theta = 1;
    cfg.sigma_theta_first = 0.0;
    cfg.sigma_theta_last = 0.0;
    cfg.gbar_r = 5;
    cfg.sigma_r_first = 0.5;
    cfg.sigma_r_last = 0.1;
    auto eng = fx.engine(cfg);
    eng.reinforce_model();
    CHECK(eng.state().r_hat[0][0] == doctest::Approx(2.5));
    CHECK((eng.state().S_beam - fx.H_beam).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("zero-width reinforcement grids keep the model column") {
    auto scene = make_scene(16, 2, 2, 4, 4, 1, 25.0, 47, 1);
    scene.cfg.sigma_theta_first = scene.cfg.sigma_theta_last = 0.0;
    scene.cfg.sigma_r_first = scene.cfg.sigma_r_last = 0.0;
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    InitialEstimate init;
    init.H0_spatial = scene.ch.H_spatial;
    init.path_set.per_ue.resize(2);
    for (int u = 0; u < 2; ++u) {
        const auto& path = scene.ch.per_ue_paths[size_t(u)][0];
        init.path_set.per_ue[size_t(u)].theta.push_back(path.aoa);
        init.path_set.per_ue[size_t(u)].r.push_back(path.distance);
        init.path_set.per_ue[size_t(u)].gain.push_back(path.gain);
    }
    eng.init_from(init);
    const CMat before = eng.state().S_beam;
    eng.state().e_mean.setZero();
    eng.reinforce_model();
    CHECK((eng.state().S_beam - before).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("genie reductions share one code path") {
    auto scene = make_scene(16, 3, 3, 10, 16, 2, 18.0, 51);
    scene.cfg.iterations = 5;
    const auto a = detect_with_known_channel(scene.rx.Y_beam, scene.frame.X_p, scene.ch.H_beam,
                                             scene.constel, scene.part, scene.rx.noise_var,
                                             scene.cfg, scene.geom);
    EpEngine eng(scene.rx.Y_beam, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var,
                 scene.cfg, scene.geom);
    eng.init_known_channel(scene.ch.H_beam);
    const auto b = eng.run();
    CHECK((a.X_hat - b.X_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("known-channel detection is error-free without noise when U <= N_c") {
    auto scene = make_scene(16, 3, 3, 12, 16, 2, 60.0, 53);
    scene.cfg.iterations = 4;
    const auto out = detect_with_known_channel(scene.rx.Y_beam, scene.frame.X_p, scene.ch.H_beam,
                                               scene.constel, scene.part, scene.rx.noise_var,
                                               scene.cfg, scene.geom);
    const double b = ber(out.X_hat.rightCols(12), scene.frame.data_indices, scene.constel);
    CHECK(b == 0.0);
}

TEST_CASE("genie-data channel NMSE is non-increasing in most trials") {
    int good = 0;
    const int trials = 10;
    for (uint64_t s = 0; s < trials; ++s) {
        auto scene = make_scene(32, 4, 4, 16, 16, 2, 26.0, 200 + 10 * s, 2);
        scene.cfg.iterations = 6;
        JcdeTruth truth;
        truth.H_beam = &scene.ch.H_beam;
        const auto out = estimate_with_known_data(scene.rx.Y_beam, scene.frame.X_p,
                                                  zero_initial(32, 4), scene.frame.X,
                                                  scene.constel, scene.part, scene.rx.noise_var,
                                                  scene.cfg, scene.geom, &truth);
        bool monotone = true;
        for (size_t i = 1; i < out.trace.size(); ++i)
            if (out.trace[i].nmse_db > out.trace[i - 1].nmse_db + 0.5) monotone = false;
        if (monotone) ++good;
    }
    CHECK(good >= int(0.9 * trials));
}

TEST_CASE("model consistency: pinned truth leaves only noise in the residual") {
    auto scene = make_scene(32, 4, 4, 60, 16, 2, 10.0, 61, 2);
    // S arbitrary, E = H - S, X true: residual power ~ sigma^2
    Rng rng(7);
    const CMat s = rng.cnormal_matrix(32, 4, 0.2);
    const CMat e = scene.ch.H_beam - s;
    const CMat residual = scene.rx.Y_beam - (s + e) * scene.frame.X;
    const double per_entry = residual.squaredNorm() / double(32 * scene.frame.X.cols());
    CHECK(per_entry == doctest::Approx(scene.rx.noise_var).epsilon(0.10));
}

TEST_CASE("non-finite observations abort with a divergence diagnostic") {
    auto scene = make_scene(8, 2, 2, 4, 4, 1, 15.0, 67);
    CMat bad = scene.rx.Y_beam;
    bad(1, 1) = Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
    EpEngine eng(bad, scene.frame.X_p, scene.constel, scene.part, scene.rx.noise_var, scene.cfg,
                 scene.geom);
    eng.init_from(zero_initial(8, 2));
    CHECK_THROWS_AS(eng.run(), JcdeDivergence);
}

TEST_CASE("lmmse factorization counter follows N Kd Nc^2 at fixed N") {
    const int n = 32, kd = 10;
    for (int nc : {4, 8, 16, 32}) {
        auto scene = make_scene(n, 3, 3, kd, 4, n / nc, 15.0, 73);
        scene.cfg.iterations = 1;
        const auto out = detect_with_known_channel(scene.rx.Y_beam, scene.frame.X_p,
                                                   scene.ch.H_beam, scene.constel, scene.part,
                                                   scene.rx.noise_var, scene.cfg, scene.geom);
        const double expect = double(n) * kd * nc * nc; // C Kd Nc^3 with C = N/Nc
        CHECK(out.flops.lmmse_fact == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("full jcde improves on the initial estimate at the small scale") {
    const auto geom = ArrayGeometry::from_carrier_ghz(64, 100.0);
    const auto grid = build_polar_grid(geom, 48, 4, 0.6, deg2rad(-60), deg2rad(60));
    const auto dict = build_dictionary(geom, grid);

    double init_nmse = 0.0, jcde_nmse = 0.0;
    const int trials = 4;
    for (uint64_t s = 0; s < trials; ++s) {
        ChannelParams p;
        p.num_ues = 8;
        p.paths_per_ue = 2;
        const auto ch = generate_channel(geom, p, 300 + s);
        const auto constel = Constellation::qam(16);
        const Frame frame = build_frame(8, 4, 40, constel, 400 + s);
        const auto rx = transmit(ch.H_spatial, frame.X, 25.0, 500 + s);

        const auto initial =
            estimate_initial(rx.Y_spatial.leftCols(4), frame.X_p, geom, dict, 24);
        JcdeConfig cfg;
        cfg.iterations = 10;
        const auto out = run_jcde(rx.Y_beam, frame.X_p, initial, constel,
                                  SubArrayPartition::even(64, 4), rx.noise_var, cfg, geom);
        init_nmse += nmse_linear(ch.H_spatial, initial.H0_spatial);
        jcde_nmse += nmse_linear(ch.H_beam, out.H_beam_hat);
    }
    CHECK(jcde_nmse < init_nmse);
}

TEST_SUITE_END();
