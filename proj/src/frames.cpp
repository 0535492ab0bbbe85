#include "xlmimo/frames.hpp"

#include "xlmimo/geometry.hpp"

#include <cmath>
#include <limits>

namespace xlmimo {

double welch_bound(int num_rows, int dim) {
    if (num_rows <= dim) return 0.0;
    return std::sqrt(double(num_rows - dim) / (double(dim) * (num_rows - 1)));
}

double max_row_coherence(const CMat& X_p) {
    const int u = int(X_p.rows());
    double best = 0.0;
    for (int i = 0; i < u; ++i) {
        for (int j = i + 1; j < u; ++j) {
            const double c = std::abs(X_p.row(i).dot(X_p.row(j))) /
                             (X_p.row(i).norm() * X_p.row(j).norm());
            best = std::max(best, c);
        }
    }
    return best;
}

namespace {

CMat random_unimodular(int rows, int cols, Rng& rng) {
    CMat g(rows, cols);
    for (int j = 0; j < cols; ++j) {
        for (int i = 0; i < rows; ++i) {
            const double phase = rng.uniform(0.0, 2.0 * kPi);
            g(i, j) = Complex(std::cos(phase), std::sin(phase));
        }
    }
    return g;
}

double offdiag_max_abs(const CMat& gram) {
    double mu = 0.0;
    for (int i = 0; i < gram.rows(); ++i)
        for (int j = 0; j < gram.cols(); ++j)
            if (i != j) mu = std::max(mu, std::abs(gram(i, j)));
    return mu;
}

// Projected gradient descent on a softmax-weighted sum of squared row
// coherences, entries re-normalized to unit modulus each step. Keeps the
// best iterate seen.
CMat polish_unimodular(CMat g, int iters, double target) {
    const double kp = double(g.cols());
    CMat best = g;
    CMat gram = (g * g.adjoint()) / kp;
    double best_mu = offdiag_max_abs(gram);
    double step = 0.5;

    for (int it = 0; it < iters && best_mu > target; ++it) {
        const double mu = offdiag_max_abs(gram);
        const double mu2 = std::max(mu * mu, 1e-12);
        const double beta = 8.0 / mu2;
        CMat weighted = gram;
        for (int i = 0; i < g.rows(); ++i) {
            for (int j = 0; j < g.rows(); ++j) {
                if (i == j) {
                    weighted(i, j) = 0.0;
                    continue;
                }
                weighted(i, j) *= std::exp(beta * (std::norm(gram(i, j)) - mu2));
            }
        }
        CMat grad = weighted * g / kp;
        g -= step * grad;
        for (int j = 0; j < g.cols(); ++j)
            for (int i = 0; i < g.rows(); ++i) {
                const double m = std::abs(g(i, j));
                g(i, j) = m > 0 ? g(i, j) / m : Complex(1.0, 0.0);
            }
        gram = (g * g.adjoint()) / kp;
        const double new_mu = offdiag_max_abs(gram);
        if (new_mu < best_mu) {
            best_mu = new_mu;
            best = g;
        } else {
            step *= 0.98;
        }
    }
    return best;
}

} // namespace

CMat design_pilots(int num_ues, int pilot_len, uint64_t seed, PilotMode mode,
                   double symbol_energy) {
    require(num_ues >= 1 && pilot_len >= 1, "design_pilots: bad sizes");
    const double amp = std::sqrt(symbol_energy);

    if (mode == PilotMode::kOrthogonal) {
        require(pilot_len >= num_ues, "design_pilots: orthogonal mode needs K_p >= U");
        CMat x(num_ues, pilot_len);
        for (int u = 0; u < num_ues; ++u)
            for (int k = 0; k < pilot_len; ++k) {
                const double phase = -2.0 * kPi * double(u) * double(k) / double(pilot_len);
                x(u, k) = amp * Complex(std::cos(phase), std::sin(phase));
            }
        return x;
    }

    Rng rng(seed);
    const int reseeds = 32;
    CMat best;
    double best_mu = std::numeric_limits<double>::infinity();
    for (int m = 0; m < reseeds; ++m) {
        CMat cand = random_unimodular(num_ues, pilot_len, rng);
        const double mu = offdiag_max_abs((cand * cand.adjoint()) / double(pilot_len));
        if (mu < best_mu) {
            best_mu = mu;
            best = cand;
        }
    }
    // Aim a little above the Welch floor; unimodular frames cannot always reach it.
    const double target = std::max(1.2 * welch_bound(num_ues, pilot_len), 0.05);
    best = polish_unimodular(best, 600, target);
    return amp * best;
}

CMat draw_data(int num_ues, int data_len, const Constellation& c, uint64_t seed,
               std::vector<int>* indices) {
    Rng rng(seed);
    CMat x(num_ues, data_len);
    if (indices) indices->assign(size_t(num_ues) * data_len, 0);
    for (int k = 0; k < data_len; ++k) {
        for (int u = 0; u < num_ues; ++u) {
            const int q = int(rng.uniform_int(uint64_t(c.order)));
            x(u, k) = c.points[q];
            if (indices) (*indices)[size_t(k) * num_ues + u] = q;
        }
    }
    return x;
}

Frame build_frame(int num_ues, int pilot_len, int data_len, const Constellation& c,
                  uint64_t seed, PilotMode mode) {
    Frame f;
    f.K_p = pilot_len;
    f.K_d = data_len;
    Rng rng(seed);
    f.X_p = design_pilots(num_ues, pilot_len, rng.fork({1}).next_u64(), mode, c.avg_energy);
    f.X_d = draw_data(num_ues, data_len, c, rng.fork({2}).next_u64(), &f.data_indices);
    f.X.resize(num_ues, pilot_len + data_len);
    f.X << f.X_p, f.X_d;
    return f;
}

ReceivedSignal transmit(const CMat& H_spatial, const CMat& X, double snr_db, uint64_t seed) {
    require(H_spatial.cols() == X.rows(), "transmit: shape mismatch");
    ReceivedSignal rx;
    const CMat hx = H_spatial * X;
    if (std::isinf(snr_db) && snr_db > 0) {
        rx.Y_spatial = hx;
        rx.noise_var = 0.0;
    } else {
        const double snr_lin = db2lin(snr_db);
        require(std::isfinite(snr_lin) && snr_lin > 0.0, "transmit: SNR must be positive");
        const double nk = double(hx.rows()) * double(hx.cols());
        rx.noise_var = hx.squaredNorm() / (nk * snr_lin);
        Rng rng(seed);
        rx.Y_spatial = hx + rng.cnormal_matrix(hx.rows(), hx.cols(), rx.noise_var);
    }
    rx.Y_beam = beam_transform(rx.Y_spatial);
    return rx;
}

} // namespace xlmimo
