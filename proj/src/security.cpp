#include "polarsim/security.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polarsim {

namespace {

constexpr double kLn2 = 0.69314718055994530941723212145818;

double log2_(double x) { return std::log(x) / kLn2; }

double hoeffding_delta(double total, double eps) {
    return std::sqrt(0.5 * total * std::log(1.0 / eps));
}

// Finite-size correction for transferring the X-basis single-photon error
// ratio onto the Z basis.
double phase_gamma(double a, double b, double c, double d) {
    b = std::clamp(b, 1e-12, 0.5);
    const double f1 = (c + d) * (1.0 - b) * b / (c * d * kLn2);
    const double f2 = log2_((c + d) / (c * d * (1.0 - b) * b) * (441.0 / (a * a)));
    if (!(f1 > 0.0) || !(f2 > 0.0)) return 0.0;
    return std::sqrt(f1 * f2);
}

struct BasisBounds {
    double s0_l = 0.0;
    double s0_u = 0.0;
    double s1_l = 0.0;
    double v1_u = 0.0;
};

// Decoy estimators for one basis. `eps1` is the per-bound Hoeffding
// failure probability; zero deltas give the asymptotic limit.
BasisBounds basis_bounds(const TallyBlock& t, Basis basis, const SourceConfig& src, double eps1,
                         bool with_deltas) {
    const double mu = src.mu;
    const double nu = src.nu;
    const double n_mu = t.n_at(basis, IntensityClass::Signal);
    const double n_nu = t.n_at(basis, IntensityClass::Decoy);
    const double m_mu = t.m_at(basis, IntensityClass::Signal);
    const double m_nu = t.m_at(basis, IntensityClass::Decoy);
    const double n_tot = n_mu + n_nu;
    const double m_tot = m_mu + m_nu;

    const double tau0 = src.p_mu * std::exp(-mu) + src.p_nu * std::exp(-nu);
    const double tau1 = src.p_mu * mu * std::exp(-mu) + src.p_nu * nu * std::exp(-nu);

    const double dn = with_deltas ? hoeffding_delta(n_tot, eps1) : 0.0;
    const double dm = with_deltas ? hoeffding_delta(m_tot, eps1) : 0.0;

    const auto scale_mu = [&](double x) { return std::exp(mu) / src.p_mu * x; };
    const auto scale_nu = [&](double x) { return std::exp(nu) / src.p_nu * x; };

    const double n_minus_nu = scale_nu(std::max(0.0, n_nu - dn));
    const double n_plus_mu = scale_mu(n_mu + dn);
    const double m_plus_mu = scale_mu(m_mu + dm);
    const double m_plus_nu = scale_nu(m_nu + dm);
    const double m_minus_nu = scale_nu(std::max(0.0, m_nu - dm));

    BasisBounds out;
    out.s0_l = std::max(0.0, tau0 * (mu * n_minus_nu - nu * n_plus_mu) / (mu - nu));
    // Vacuum events err half the time, so either intensity's error count
    // upper-bounds them; take the tighter one.
    out.s0_u = 2.0 * tau0 * std::min(m_plus_mu, m_plus_nu);
    const double r2 = (nu * nu) / (mu * mu);
    out.s1_l = std::max(0.0, tau1 * mu / (nu * (mu - nu)) *
                                 (n_minus_nu - r2 * n_plus_mu -
                                  (1.0 - r2) * out.s0_u / tau0));
    out.v1_u = std::max(0.0, tau1 / (mu - nu) * (m_plus_mu - m_minus_nu));
    return out;
}

DecoyBounds bounds_impl(const TallyBlock& t, const SourceConfig& src, const SecurityParams& p,
                        bool with_deltas) {
    src.validate();
    p.validate();
    if (!(src.mu > src.nu) || !(src.nu > 0.0))
        throw std::domain_error("decoy_bounds: need mu > nu > 0");
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 2; ++k)
            if (!(t.n[b][k] > 0.0))
                throw std::domain_error("decoy_bounds: empty tally category");

    const double eps1 = p.eps_sec / p.budget.bound_failures;
    const BasisBounds z = basis_bounds(t, Basis::Z, src, eps1, with_deltas);
    const BasisBounds x = basis_bounds(t, Basis::X, src, eps1, with_deltas);

    DecoyBounds out;
    out.s_z0_l = z.s0_l;
    out.s_z1_l = z.s1_l;
    out.s_x1_l = x.s1_l;
    out.v_x1_u = x.v1_u;
    if (!(x.s1_l > 0.0)) {
        out.phi_z_u = 0.5;
        return out;
    }
    const double ratio = std::min(0.5, x.v1_u / x.s1_l);
    const double corr =
        with_deltas && z.s1_l > 0.0 ? phase_gamma(p.eps_sec, ratio, x.s1_l, z.s1_l) : 0.0;
    out.phi_z_u = std::min(0.5, ratio + corr);
    return out;
}

}  // namespace

void SecurityParams::validate() const {
    if (!(eps_sec > 0.0) || !(eps_sec < 1.0) || !(eps_cor > 0.0) || !(eps_cor < 1.0))
        throw std::domain_error("security: epsilons must be in (0, 1)");
    if (!(f_ec >= 1.0)) throw std::domain_error("security: f_ec must be >= 1");
    if (!(n_pulses >= 1.0)) throw std::domain_error("security: n_pulses must be >= 1");
    if (!(rep_rate_hz > 0.0)) throw std::domain_error("security: rep_rate must be > 0");
    if (!(budget.bound_failures >= 1.0))
        throw std::domain_error("security: bound_failures must be >= 1");
}

double binary_entropy(double x) {
    if (!(x >= 0.0) || !(x <= 1.0)) throw std::domain_error("binary_entropy: x must be in [0, 1]");
    if (x == 0.0 || x == 1.0) return 0.0;
    return -x * log2_(x) - (1.0 - x) * log2_(1.0 - x);
}

DecoyBounds decoy_bounds(const TallyBlock& t, const SourceConfig& src, const SecurityParams& p) {
    return bounds_impl(t, src, p, true);
}

DecoyBounds asymptotic_bounds(const TallyBlock& t, const SourceConfig& src,
                              const SecurityParams& p) {
    return bounds_impl(t, src, p, false);
}

double lambda_ec(const TallyBlock& t, const SecurityParams& p) {
    p.validate();
    const double n_z = t.n_total(Basis::Z);
    if (!(n_z > 0.0)) throw std::domain_error("lambda_ec: empty Z tally");
    const double q = t.m_total(Basis::Z) / n_z;
    return p.f_ec * n_z * binary_entropy(q);
}

KeyRateReport secret_key_length(const DecoyBounds& b, double lambda_ec_bits,
                                const SecurityParams& p) {
    p.validate();
    if (!(b.s_z0_l >= 0.0) || !(b.s_z1_l >= 0.0) || !(lambda_ec_bits >= 0.0))
        throw std::domain_error("secret_key_length: bounds must be >= 0");
    KeyRateReport r;
    r.s_z0_l = b.s_z0_l;
    r.s_z1_l = b.s_z1_l;
    r.phi_z_u = std::clamp(b.phi_z_u, 0.0, 0.5);
    r.lambda_ec_bits = lambda_ec_bits;
    const double l = b.s_z0_l + b.s_z1_l * (1.0 - binary_entropy(r.phi_z_u)) - lambda_ec_bits -
                     6.0 * log2_(19.0 / p.eps_sec) - log2_(2.0 / p.eps_cor);
    r.floored = l < 0.0;
    r.secret_bits = std::max(0.0, l);
    r.skr_bps = r.secret_bits * p.rep_rate_hz / p.n_pulses;
    return r;
}

}  // namespace polarsim
