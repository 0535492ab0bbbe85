#ifndef XLMIMO_FLOPS_HPP
#define XLMIMO_FLOPS_HPP

namespace xlmimo {

// Surrogate FLOP counters incremented at the dominant kernels. Counts track
// the complexity-table terms (e.g. lmmse_fact accumulates N_c^3 per
// factorization), not exact multiply counts.
struct FlopsCounter {
    double somp_corr = 0;    // stage-1 dictionary correlations
    double somp_refit = 0;   // stage-1 LS re-projections
    double pairing_corr = 0; // stage-2 pair metric evaluations
    double pairing_refit = 0;
    double lmmse_fact = 0;  // sub-array covariance factorizations
    double lmmse_solve = 0; // per-user solves against the factorization
    double denoise = 0;     // constellation sums
    double error_ic = 0;    // scalar error soft-IC updates
    double reinforce = 0;   // refinement-grid correlations
    double misc = 0;

    double total() const {
        return somp_corr + somp_refit + pairing_corr + pairing_refit + lmmse_fact + lmmse_solve +
               denoise + error_ic + reinforce + misc;
    }

    FlopsCounter& operator+=(const FlopsCounter& o) {
        somp_corr += o.somp_corr;
        somp_refit += o.somp_refit;
        pairing_corr += o.pairing_corr;
        pairing_refit += o.pairing_refit;
        lmmse_fact += o.lmmse_fact;
        lmmse_solve += o.lmmse_solve;
        denoise += o.denoise;
        error_ic += o.error_ic;
        reinforce += o.reinforce;
        misc += o.misc;
        return *this;
    }
};

} // namespace xlmimo

#endif
