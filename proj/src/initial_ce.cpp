#include "xlmimo/initial_ce.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

namespace xlmimo {

namespace {
constexpr double kSpanTol = 1e-10;
} // namespace

SompResult somp(const CMat& Y, const Dictionary& dict, int budget, FlopsCounter* flops) {
    const int n = int(Y.rows());
    const int k = int(Y.cols());
    const int m = dict.size();
    require(dict.atoms.rows() == n, "somp: dictionary row mismatch");
    require(budget >= 1 && budget <= m, "somp: budget must be in [1, M]");
    require(budget <= n * k, "somp: budget exceeds measurement count");

    SompResult out;
    CMat residual = Y;
    CMat corr = dict.atoms.adjoint() * Y; // M x K, correlation with the residual
    if (flops) flops->somp_corr += double(m) * n * k;

    CMat q_basis(n, budget);   // orthonormal basis of the selected atoms
    CMat r_factor = CMat::Zero(budget, budget); // A_S = Q R
    std::vector<bool> masked(size_t(m), false);
    int rank = 0;

    while (int(out.support.size()) < budget) {
        // Atom maximizing the summed squared correlation across columns.
        int best = -1;
        double best_score = -1.0;
        for (int j = 0; j < m; ++j) {
            if (masked[size_t(j)]) continue;
            const double score = corr.row(j).squaredNorm();
            if (score > best_score) {
                best_score = score;
                best = j;
            }
        }
        if (best < 0) break; // dictionary exhausted
        masked[size_t(best)] = true;

        const CVec atom = dict.atoms.col(best);
        CVec w = atom;
        CVec proj(rank);
        if (rank > 0) {
            proj = q_basis.leftCols(rank).adjoint() * atom;
            w -= q_basis.leftCols(rank) * proj;
        }
        const double nrm = w.norm();
        if (flops) flops->somp_refit += double(n) * (rank + 1);
        if (nrm < kSpanTol * atom.norm()) continue; // in span of the selected set: drop

        q_basis.col(rank) = w / nrm;
        r_factor.block(0, rank, rank, 1) = proj;
        r_factor(rank, rank) = nrm;

        // Joint-LS residual shrinks by the new orthonormal direction.
        const Eigen::RowVectorXcd s = q_basis.col(rank).adjoint() * residual;
        residual.noalias() -= q_basis.col(rank) * s;
        corr.noalias() -= (dict.atoms.adjoint() * q_basis.col(rank)) * s;
        if (flops) {
            flops->somp_corr += double(m) * (n + k);
            flops->somp_refit += double(n) * k;
        }
        ++rank;

        out.support.push_back(best);
        out.candidates.emplace_back(dict.meta[size_t(best)].theta, dict.meta[size_t(best)].r);
        out.residual_norms.push_back(residual.norm());
    }

    // Gains of the joint LS fit on the selected set.
    if (rank > 0) {
        const CMat qy = q_basis.leftCols(rank).adjoint() * Y;
        out.coeffs = r_factor.topLeftCorner(rank, rank)
                         .triangularView<Eigen::Upper>()
                         .solve(qy);
        if (flops) flops->somp_refit += double(rank) * rank * k;
    } else {
        out.coeffs.resize(0, k);
    }
    return out;
}

PathEstimateSet two_d_omp(const CMat& Y_p, const Dictionary& cand_dict, const CMat& X_p,
                          int budget, FlopsCounter* flops) {
    const int n = int(Y_p.rows());
    const int kp = int(Y_p.cols());
    const int num_ues = int(X_p.rows());
    const int l_hat = cand_dict.size();
    require(X_p.cols() == kp, "two_d_omp: pilot length mismatch");
    require(cand_dict.atoms.rows() == n, "two_d_omp: dictionary row mismatch");
    require(budget >= 1 && budget <= l_hat * num_ues, "two_d_omp: bad budget");

    const RVec pilot_norms = X_p.rowwise().norm();
    const double atom_norm = std::sqrt(double(n));

    // Small Grams let the joint LS run on the implicit Kronecker operator.
    const CMat gram_atoms = cand_dict.atoms.adjoint() * cand_dict.atoms;   // L x L
    const CMat gram_pilots = X_p.conjugate() * X_p.transpose();            // U x U
    const CMat proj_y = (cand_dict.atoms.adjoint() * Y_p) * X_p.adjoint(); // L x U
    if (flops)
        flops->pairing_corr += double(l_hat) * l_hat * n + double(num_ues) * num_ues * kp +
                               double(l_hat) * n * kp + double(l_hat) * kp * num_ues;

    CMat residual = Y_p;
    std::vector<char> masked(size_t(l_hat) * num_ues, 0);
    std::vector<int> sel_l, sel_u;
    CVec gains;

    PathEstimateSet out;
    out.candidates.reserve(size_t(l_hat));
    for (int l = 0; l < l_hat; ++l)
        out.candidates.emplace_back(cand_dict.meta[size_t(l)].theta, cand_dict.meta[size_t(l)].r);

    for (int it = 0; it < budget; ++it) {
        // pair metric: |a_l^H R x_{p,u}^*| / (|a_l| |x_{p,u}|)
        const CMat metric = (cand_dict.atoms.adjoint() * residual) * X_p.adjoint(); // L x U
        if (flops) flops->pairing_corr += double(l_hat) * n * kp + double(l_hat) * kp * num_ues;

        int best_l = -1, best_u = -1;
        double best_score = -1.0;
        for (int u = 0; u < num_ues; ++u) { // u-major scan, ties to the lowest flat index
            for (int l = 0; l < l_hat; ++l) {
                if (masked[size_t(u) * l_hat + l]) continue;
                const double score = std::abs(metric(l, u)) / (atom_norm * pilot_norms(u));
                if (score > best_score) {
                    best_score = score;
                    best_l = l;
                    best_u = u;
                }
            }
        }
        require(best_l >= 0, "two_d_omp: pair space exhausted");

        sel_l.push_back(best_l);
        sel_u.push_back(best_u);
        // Mask the pair and any exact-duplicate candidate for the same UE.
        for (int l = 0; l < l_hat; ++l) {
            if (cand_dict.meta[size_t(l)].theta == cand_dict.meta[size_t(best_l)].theta &&
                cand_dict.meta[size_t(l)].r == cand_dict.meta[size_t(best_l)].r)
                masked[size_t(best_u) * l_hat + l] = 1;
        }

        // Joint LS over all selected pairs against vec(Y_p).
        const int t = int(sel_l.size());
        CMat gram(t, t);
        CVec rhs(t);
        for (int i = 0; i < t; ++i) {
            for (int j = 0; j < t; ++j)
                gram(i, j) = gram_pilots(sel_u[size_t(i)], sel_u[size_t(j)]) *
                             gram_atoms(sel_l[size_t(i)], sel_l[size_t(j)]);
            rhs(i) = proj_y(sel_l[size_t(i)], sel_u[size_t(i)]);
        }
        Eigen::LDLT<CMat> ldlt(gram);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            // Near-singular refit: fall back to a lightly ridged system.
            const double ridge = 1e-12 * std::abs(gram.trace()) / t;
            ldlt.compute(gram + ridge * CMat::Identity(t, t));
        }
        gains = ldlt.solve(rhs);
        if (flops) flops->pairing_refit += double(t) * t * t / 3.0 + double(t) * n * kp;

        residual = Y_p;
        for (int i = 0; i < t; ++i)
            residual.noalias() -=
                gains(i) * cand_dict.atoms.col(sel_l[size_t(i)]) * X_p.row(sel_u[size_t(i)]);
    }

    out.per_ue.resize(size_t(num_ues));
    for (size_t i = 0; i < sel_l.size(); ++i) {
        auto& ue = out.per_ue[size_t(sel_u[i])];
        ue.theta.push_back(out.candidates[size_t(sel_l[i])].first);
        ue.r.push_back(out.candidates[size_t(sel_l[i])].second);
        ue.gain.push_back(gains(Eigen::Index(i)));
        out.selected_pairs.emplace_back(sel_l[i], sel_u[i]);
    }
    return out;
}

InitialEstimate reconstruct_initial(const PathEstimateSet& paths, const ArrayGeometry& geom,
                                    int num_ues) {
    InitialEstimate est;
    est.path_set = paths;
    est.H0_spatial = CMat::Zero(geom.num_antennas, num_ues);
    for (int u = 0; u < num_ues && u < int(paths.per_ue.size()); ++u) {
        const auto& ue = paths.per_ue[size_t(u)];
        for (int l = 0; l < ue.count(); ++l)
            est.H0_spatial.col(u) +=
                array_response(geom, ue.theta[size_t(l)], ue.r[size_t(l)]) * ue.gain[size_t(l)];
    }
    return est;
}

InitialEstimate estimate_initial(const CMat& Y_p, const CMat& X_p, const ArrayGeometry& geom,
                                 const Dictionary& grid_dict, int budget, FlopsCounter* flops) {
    const SompResult stage1 = somp(Y_p, grid_dict, budget, flops);
    const Dictionary cand = build_candidate_dictionary(stage1.candidates, geom);
    const PathEstimateSet paired = two_d_omp(Y_p, cand, X_p, int(stage1.candidates.size()), flops);
    return reconstruct_initial(paired, geom, int(X_p.rows()));
}

CMat ls_baseline(const CMat& Y_p, const CMat& X_p) {
    const int num_ues = int(X_p.rows());
    CMat gram = X_p * X_p.adjoint(); // U x U
    const double ridge = 1e-12 * std::abs(gram.trace()) / num_ues;
    gram += ridge * CMat::Identity(num_ues, num_ues);
    // H = Y X^H (X X^H + eps I)^{-1}, via the Hermitian solve of the adjoint.
    const CMat rhs = X_p * Y_p.adjoint(); // U x N
    return Eigen::LDLT<CMat>(gram).solve(rhs).adjoint();
}

InitialEstimate psomp_baseline(const CMat& Y_p, const CMat& X_p, const ArrayGeometry& geom,
                               const Dictionary& grid_dict, int per_ue_budget,
                               FlopsCounter* flops) {
    const int num_ues = int(X_p.rows());
    PathEstimateSet paths;
    paths.per_ue.resize(size_t(num_ues));
    for (int u = 0; u < num_ues; ++u) {
        const CVec matched =
            Y_p * X_p.row(u).adjoint() / X_p.row(u).squaredNorm(); // pilot-matched observation
        const SompResult res = somp(matched, grid_dict, per_ue_budget, flops);
        auto& ue = paths.per_ue[size_t(u)];
        for (size_t i = 0; i < res.candidates.size(); ++i) {
            ue.theta.push_back(res.candidates[i].first);
            ue.r.push_back(res.candidates[i].second);
            ue.gain.push_back(res.coeffs(Eigen::Index(i), 0));
            paths.selected_pairs.emplace_back(res.support[i], u);
        }
    }
    return reconstruct_initial(paths, geom, num_ues);
}

} // namespace xlmimo
