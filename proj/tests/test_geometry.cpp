#include "xlmimo/geometry.hpp"
#include "xlmimo/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace xlmimo;

TEST_SUITE_BEGIN("geometry");

TEST_CASE("ULA coordinates are symmetric and half-wavelength spaced") {
    const auto g = ArrayGeometry::ula(8, 0.003);
    CHECK(g.spacing == doctest::Approx(0.0015));
    CHECK(g.coords(0) == doctest::Approx(-3.5 * 0.0015));
    CHECK(g.coords(7) == doctest::Approx(3.5 * 0.0015));
    for (int n = 1; n < 8; ++n) CHECK(g.coords(n) > g.coords(n - 1));
    CHECK(std::abs(g.coords.sum()) < 1e-15);
}

TEST_CASE("array response center element has zero phase") {
    // N=3 puts an antenna exactly at y=0, where r^(n) = r.
    const auto g = ArrayGeometry::ula(3, 0.003);
    const CVec a = array_response(g, 0.4, 5.0);
    CHECK(std::abs(a(1) - Complex(1.0, 0.0)) < 1e-12);
}

TEST_CASE("array response matches far-field vector at large distance") {
    const auto g = ArrayGeometry::ula(8, 0.003);
    const double theta = deg2rad(30.0);
    const CVec a = array_response(g, theta, 1e9);
    const CVec far = array_response_far(g, theta);
    CHECK((a - far).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("array response phases match the exact point-geometry oracle") {
    // N=4, lambda=3 mm, theta=30 deg, r=5 m; oracle places the source at
    // (r cos(theta), r sin(theta)) and measures 2D distances to each element.
    const auto g = ArrayGeometry::ula(4, 0.003);
    const double theta = deg2rad(30.0), r = 5.0;
    const CVec a = array_response(g, theta, r);

    const double ux = r * std::cos(theta), uy = r * std::sin(theta);
    for (int n = 0; n < 4; ++n) {
        const double rn = std::hypot(ux, uy - g.coords(n));
        const double phase = -(2.0 * kPi / 0.003) * (rn - r);
        CHECK(std::arg(a(n)) == doctest::Approx(std::remainder(phase, 2 * kPi)).epsilon(1e-9));
    }
    // frozen oracle values
    CHECK(std::arg(a(0)) == doctest::Approx(-2.356989526919).epsilon(1e-9));
    CHECK(std::arg(a(1)) == doctest::Approx(-0.785486514064).epsilon(1e-9));
    CHECK(std::arg(a(2)) == doctest::Approx(0.785309799477).epsilon(1e-9));
    CHECK(std::arg(a(3)) == doctest::Approx(2.355399095618).epsilon(1e-9));
}

TEST_CASE("array response elements are unit modulus") {
    const auto g = ArrayGeometry::from_carrier_ghz(128, 100.0);
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        const CVec a = array_response(g, rng.uniform(-kPi / 2, kPi / 2), rng.uniform(0.7, 40.0));
        CHECK((a.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("array response rejects nonpositive distance") {
    const auto g = ArrayGeometry::ula(4, 0.003);
    CHECK_THROWS_AS(array_response(g, 0.1, 0.0), DomainError);
    CHECK_THROWS_AS(array_response(g, 0.1, -2.0), DomainError);
}

TEST_CASE("far-field convergence is monotone over growing distance") {
    const auto g = ArrayGeometry::ula(64, 0.003);
    const double theta = deg2rad(17.0);
    const CVec far = array_response_far(g, theta);
    double prev = std::numeric_limits<double>::infinity();
    for (double r : {1e3, 1e6, 1e9}) {
        const double dist = (array_response(g, theta, r) - far).cwiseAbs().maxCoeff();
        CHECK(dist < prev);
        prev = dist;
    }
}

TEST_CASE("generate_channel reproduces the documented gain statistics") {
    const auto g = ArrayGeometry::from_carrier_ghz(16, 100.0);
    ChannelParams p;
    p.num_ues = 40;
    p.paths_per_ue = 3;
    p.rician_db = 10.0;

    double los_power = 0.0, nlos_power = 0.0;
    const int reps = 50;
    for (int rep = 0; rep < reps; ++rep) {
        const auto ch = generate_channel(g, p, 100 + uint64_t(rep));
        for (const auto& ue : ch.per_ue_paths) {
            CHECK(ue.size() == 3);
            CHECK(ue[0].is_los);
            los_power += std::norm(ue[0].gain);
            nlos_power += std::norm(ue[1].gain) + std::norm(ue[2].gain);
        }
    }
    const double kf = db2lin(10.0);
    const double mean_los = los_power / (reps * 40.0);
    const double mean_nlos = nlos_power / (reps * 40.0 * 2.0);
    CHECK(mean_los == doctest::Approx(kf / (kf + 1)).epsilon(0.05));
    CHECK(mean_nlos == doctest::Approx(1.0 / ((kf + 1) * 2)).epsilon(0.05));
}

TEST_CASE("single-path channel with huge K-factor is a scaled steering vector") {
    const auto g = ArrayGeometry::from_carrier_ghz(16, 100.0);
    ChannelParams p;
    p.num_ues = 6;
    p.paths_per_ue = 1;
    p.rician_db = 300.0; // K_f -> inf: E|z|^2 -> 1
    const auto ch = generate_channel(g, p, 42);
    for (int u = 0; u < 6; ++u) {
        const auto& path = ch.per_ue_paths[size_t(u)][0];
        const CVec expect = array_response(g, path.aoa, path.distance) * path.gain;
        CHECK((ch.H_spatial.col(u) - expect).norm() == doctest::Approx(0.0));
    }
    double zsq = 0.0;
    for (uint64_t s = 0; s < 100; ++s) {
        const auto rep = generate_channel(g, p, 1000 + s);
        for (const auto& ue : rep.per_ue_paths) zsq += std::norm(ue[0].gain);
    }
    CHECK(zsq / 600.0 == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("generate_channel is bit-for-bit deterministic under a fixed seed") {
    const auto g = ArrayGeometry::from_carrier_ghz(32, 100.0);
    ChannelParams p;
    p.num_ues = 5;
    p.paths_per_ue = 2;
    const auto a = generate_channel(g, p, 777);
    const auto b = generate_channel(g, p, 777);
    CHECK((a.H_spatial - b.H_spatial).cwiseAbs().maxCoeff() == 0.0);
    const auto c = generate_channel(g, p, 778);
    CHECK((a.H_spatial - c.H_spatial).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("beam transform is unitary and invertible") {
    Rng rng(9);
    const CMat h = rng.cnormal_matrix(48, 7);
    const CMat hb = beam_transform(h);
    CHECK(std::abs(hb.norm() - h.norm()) < 1e-10 * h.norm());
    CHECK((inverse_beam_transform(hb) - h).norm() < 1e-10 * h.norm());

    // identity column maps to a unit-norm DFT column
    CMat e = CMat::Zero(16, 1);
    e(3, 0) = 1.0;
    const CMat eb = beam_transform(e);
    CHECK(eb.norm() == doctest::Approx(1.0));
}

TEST_CASE("far-field steering vector at a DFT angle occupies one beam bin") {
    const int n = 16;
    const auto g = ArrayGeometry::ula(n, 0.003);
    // sin(theta) = 2 m0 / N lands exactly on the DFT raster
    const double theta = std::asin(2.0 * 3 / n);
    const CMat hb = beam_transform(array_response_far(g, theta));
    RVec mags = hb.cwiseAbs().col(0);
    int heavy = 0;
    for (int i = 0; i < n; ++i)
        if (mags(i) > 1e-9 * mags.maxCoeff()) ++heavy;
    CHECK(heavy == 1);
}

TEST_CASE("near-field column needs more beam bins than the far-field one") {
    const auto g = ArrayGeometry::from_carrier_ghz(200, 100.0);
    const double theta = deg2rad(12.0);
    const CMat near_beam = beam_transform(array_response(g, theta, 5.0));
    const CMat far_beam = beam_transform(array_response_far(g, theta));
    const int near_bins = beam_support_count(near_beam.col(0), 0.95);
    const int far_bins = beam_support_count(far_beam.col(0), 0.95);
    CHECK(near_bins > 1);
    CHECK(near_bins > far_bins);
}

TEST_CASE("95%-energy beam bin count decays with distance") {
    const auto g = ArrayGeometry::from_carrier_ghz(200, 100.0);
    const double theta = deg2rad(20.0);
    int prev = std::numeric_limits<int>::max();
    for (double r : {3.0, 5.0, 7.0}) {
        const CMat hb = beam_transform(array_response(g, theta, r));
        const int bins = beam_support_count(hb.col(0), 0.95);
        CHECK(bins <= prev);
        prev = bins;
    }
    const CMat far = beam_transform(array_response_far(g, theta));
    CHECK(beam_support_count(far.col(0), 0.95) <= prev);
}

TEST_SUITE_END();
