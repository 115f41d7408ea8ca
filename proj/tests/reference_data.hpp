#pragma once
// Reference measurement campaign over 25/50/75/100 km spools: per-distance
// source settings, measured channel budgets, raw tallies over 200 s, and
// the reported analysis outputs used as validation targets.

#include "polarsim/link.hpp"

struct ReferenceRun {
    double km;
    double channel_db;
    double mu, nu, p_mu, p_nu, p_z, p_x;
    double n_z_mu, n_z_nu, n_x_mu, n_x_nu;
    double m_z_mu, m_z_nu, m_x_mu, m_x_nu;
    double phi_z_u;
    double qber;
    double s_z1_l;
    double skr_bps;
};

inline constexpr ReferenceRun kReferenceRuns[4] = {
    {25.0, 4.97, 0.679, 0.127, 0.859, 0.141, 0.960, 0.040,
     3.08e7, 9.57e5, 1.09e6, 2.91e4, 1.59e5, 8.04e3, 8.14e3, 8.84e2,
     3.37e-2, 5.27e-3, 1.48e7, 4.94e4},
    {50.0, 9.73, 0.654, 0.151, 0.809, 0.191, 0.943, 0.057,
     8.56e6, 4.75e5, 5.03e5, 2.69e4, 4.70e4, 4.48e3, 4.91e3, 8.95e2,
     3.36e-2, 5.70e-3, 4.26e6, 1.41e4},
    {75.0, 14.22, 0.626, 0.176, 0.726, 0.274, 0.907, 0.093,
     2.23e6, 2.31e5, 2.22e5, 2.61e4, 1.90e4, 4.73e3, 3.00e3, 1.03e3,
     3.25e-2, 9.66e-3, 1.08e6, 3.15e3},
    {100.0, 18.68, 0.569, 0.185, 0.598, 0.402, 0.761, 0.239,
     4.53e5, 1.05e5, 1.43e5, 3.53e4, 9.90e3, 4.68e3, 4.84e3, 2.92e3,
     7.62e-2, 2.61e-2, 2.64e5, 2.40e2},
};

inline polarsim::TallyBlock reference_tally(const ReferenceRun& r) {
    polarsim::TallyBlock t;
    t.duration_s = 200.0;
    t.n[0][0] = r.n_z_mu;
    t.n[0][1] = r.n_z_nu;
    t.n[1][0] = r.n_x_mu;
    t.n[1][1] = r.n_x_nu;
    t.m[0][0] = r.m_z_mu;
    t.m[0][1] = r.m_z_nu;
    t.m[1][0] = r.m_x_mu;
    t.m[1][1] = r.m_x_nu;
    return t;
}

inline polarsim::SourceConfig reference_source(const ReferenceRun& r) {
    polarsim::SourceConfig s;
    s.mu = r.mu;
    s.nu = r.nu;
    s.p_mu = r.p_mu;
    s.p_nu = r.p_nu;
    s.p_z = r.p_z;
    s.p_x = r.p_x;
    return s;
}
