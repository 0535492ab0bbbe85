#ifndef XLMIMO_INITIAL_CE_HPP
#define XLMIMO_INITIAL_CE_HPP

#include "xlmimo/common.hpp"
#include "xlmimo/flops.hpp"
#include "xlmimo/polar.hpp"

#include <utility>
#include <vector>

namespace xlmimo {

struct SompResult {
    std::vector<int> support;                          // selected atom indices, in order
    std::vector<std::pair<double, double>> candidates; // (theta, r) of the support
    CMat coeffs;                                       // t x K joint-LS gains
    std::vector<double> residual_norms;                // Frobenius norm after each selection
};

// Simultaneous OMP: greedy atom selection by summed squared correlation over
// measurement columns, exact joint LS re-projection each iteration via an
// incrementally extended QR factorization of the selected set.
SompResult somp(const CMat& Y, const Dictionary& dict, int budget, FlopsCounter* flops = nullptr);

struct UePathEstimates {
    std::vector<double> theta;
    std::vector<double> r;
    std::vector<Complex> gain;
    int count() const { return int(theta.size()); }
};

struct PathEstimateSet {
    std::vector<std::pair<double, double>> candidates;
    std::vector<UePathEstimates> per_ue;
    std::vector<std::pair<int, int>> selected_pairs; // (candidate, ue) in selection order
};

// UE-path pairing over the product of candidate atoms and pilot rows, working
// on the implicit Kronecker operator (the N K_p x L_hat U matrix is never
// materialized). Joint LS over all selected pairs each iteration.
PathEstimateSet two_d_omp(const CMat& Y_p, const Dictionary& cand_dict, const CMat& X_p,
                          int budget, FlopsCounter* flops = nullptr);

struct InitialEstimate {
    CMat H0_spatial; // N x U
    PathEstimateSet path_set;
};

InitialEstimate reconstruct_initial(const PathEstimateSet& paths, const ArrayGeometry& geom,
                                    int num_ues);

// Two-stage pipeline: SOMP over the full polar grid, then 2D-OMP pairing over
// the candidate dictionary.
InitialEstimate estimate_initial(const CMat& Y_p, const CMat& X_p, const ArrayGeometry& geom,
                                 const Dictionary& grid_dict, int budget,
                                 FlopsCounter* flops = nullptr);

// Minimum-norm / ridge LS fit; underdetermined when K_p < U.
CMat ls_baseline(const CMat& Y_p, const CMat& X_p);

// Per-UE matched filtering followed by per-UE pursuit; ignores pilot
// non-orthogonality, so inter-user contamination persists.
InitialEstimate psomp_baseline(const CMat& Y_p, const CMat& X_p, const ArrayGeometry& geom,
                               const Dictionary& grid_dict, int per_ue_budget,
                               FlopsCounter* flops = nullptr);

} // namespace xlmimo

#endif
