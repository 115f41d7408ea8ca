#pragma once
// One-decoy finite-key analysis: concentration-bounded vacuum and
// single-photon yields, phase-error upper bound, and the secret-key
// length / rate computation.

#include "polarsim/link.hpp"

namespace polarsim {

// How the secrecy failure budget is allocated across the statistical
// estimates. Each Hoeffding bound is evaluated at eps_sec / bound_failures;
// the phase-error correction term is evaluated at eps_sec itself.
struct EpsilonBudget {
    double bound_failures = 19.0;
};

struct SecurityParams {
    double eps_sec = 1e-9;
    double eps_cor = 1e-9;
    double f_ec = 1.16;  // error-correction efficiency
    double n_pulses = 1e10;
    double rep_rate_hz = 50e6;
    EpsilonBudget budget;

    void validate() const;  // throws std::domain_error
};

// Binary Shannon entropy in bits; h(0) = h(1) = 0 by continuity.
// Throws std::domain_error outside [0, 1].
double binary_entropy(double x);

struct DecoyBounds {
    double s_z0_l = 0.0;   // lower bound, vacuum events in Z
    double s_z1_l = 0.0;   // lower bound, single-photon events in Z
    double phi_z_u = 0.0;  // upper bound, single-photon phase error rate
    // Reported intermediates.
    double s_x1_l = 0.0;
    double v_x1_u = 0.0;
};

// Finite-statistics decoy bounds from a tally block. Requires mu > nu and
// nonzero counts in both bases and both intensities; throws
// std::domain_error otherwise. Bounds are conservative: they never beat
// the asymptotic values computed from the same tallies.
DecoyBounds decoy_bounds(const TallyBlock& t, const SourceConfig& src, const SecurityParams& p);

// Same estimators with all concentration terms removed (the infinite-
// statistics limit of decoy_bounds for scaled-up tallies).
DecoyBounds asymptotic_bounds(const TallyBlock& t, const SourceConfig& src,
                              const SecurityParams& p);

// Bits disclosed for error correction: f_ec * n_Z * h(QBER_Z).
// Throws std::domain_error when the Z tally is empty.
double lambda_ec(const TallyBlock& t, const SecurityParams& p);

struct KeyRateReport {
    double s_z0_l = 0.0;
    double s_z1_l = 0.0;
    double phi_z_u = 0.0;
    double lambda_ec_bits = 0.0;
    double secret_bits = 0.0;  // l, floored at 0
    double skr_bps = 0.0;      // l * rep_rate / n_pulses
    bool floored = false;      // true when the l >= 0 floor was binding
};

// Secret length l = s_z0 + s_z1 (1 - h(phi)) - lambda - 6 log2(19/eps_sec)
// - log2(2/eps_cor), floored at zero, and the corresponding rate.
KeyRateReport secret_key_length(const DecoyBounds& b, double lambda_ec_bits,
                                const SecurityParams& p);

}  // namespace polarsim
