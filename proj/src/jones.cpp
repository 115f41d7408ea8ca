#include "polarsim/jones.hpp"

#include <cmath>
#include <stdexcept>

namespace polarsim {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr Complex kI{0.0, 1.0};

bool finite(Complex c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); }
}  // namespace

Operator2 Operator2::identity() {
    return Operator2{{Complex{1.0, 0.0}, {}, {}, Complex{1.0, 0.0}}};
}

PathState Operator2::apply(const PathState& s) const {
    return PathState{m[0] * s.alpha + m[1] * s.beta, m[2] * s.alpha + m[3] * s.beta};
}

Operator2 Operator2::compose(const Operator2& rhs) const {
    Operator2 out;
    out.m[0] = m[0] * rhs.m[0] + m[1] * rhs.m[2];
    out.m[1] = m[0] * rhs.m[1] + m[1] * rhs.m[3];
    out.m[2] = m[2] * rhs.m[0] + m[3] * rhs.m[2];
    out.m[3] = m[2] * rhs.m[1] + m[3] * rhs.m[3];
    return out;
}

Operator2 Operator2::adjoint() const {
    return Operator2{{std::conj(m[0]), std::conj(m[2]), std::conj(m[1]), std::conj(m[3])}};
}

bool Operator2::is_unitary(double tol) const {
    const Operator2 p = adjoint().compose(*this);
    return std::abs(p.m[0] - 1.0) <= tol && std::abs(p.m[3] - 1.0) <= tol &&
           std::abs(p.m[1]) <= tol && std::abs(p.m[2]) <= tol;
}

bool Operator2::is_hermitian_psd(double tol) const {
    if (std::abs(m[0].imag()) > tol || std::abs(m[3].imag()) > tol) return false;
    if (std::abs(m[1] - std::conj(m[2])) > tol) return false;
    // Eigenvalues of a 2x2 Hermitian matrix.
    const double a = m[0].real();
    const double d = m[3].real();
    const double off = std::abs(m[1]);
    const double mean = 0.5 * (a + d);
    const double rad = std::sqrt(0.25 * (a - d) * (a - d) + off * off);
    return mean - rad >= -tol;
}

Operator2 operator*(const Operator2& a, const Operator2& b) { return a.compose(b); }

Bb84State conjugate_state(Bb84State s) {
    switch (s) {
        case Bb84State::H: return Bb84State::V;
        case Bb84State::V: return Bb84State::H;
        case Bb84State::D: return Bb84State::A;
        case Bb84State::A: return Bb84State::D;
    }
    throw std::logic_error("conjugate_state: bad state");
}

DriftParams::DriftParams(double varphi_rad, double phi_rad) {
    if (!std::isfinite(varphi_rad) || !std::isfinite(phi_rad))
        throw std::domain_error("DriftParams: angles must be finite");
    varphi = std::fmod(varphi_rad, kPi);
    if (varphi < 0.0) varphi += kPi;
    phi = std::fmod(phi_rad + kPi, 2.0 * kPi);
    if (phi < 0.0) phi += 2.0 * kPi;
    phi -= kPi;
}

PathState make_state(Complex alpha, Complex beta) {
    if (!finite(alpha) || !finite(beta))
        throw std::domain_error("make_state: amplitudes must be finite");
    const double n2 = std::norm(alpha) + std::norm(beta);
    if (n2 <= 0.0) throw std::domain_error("make_state: zero amplitude vector");
    const double inv = 1.0 / std::sqrt(n2);
    return PathState{alpha * inv, beta * inv};
}

Operator2 phase_shifter(double theta) {
    if (!std::isfinite(theta)) throw std::domain_error("phase_shifter: theta must be finite");
    return Operator2{{std::exp(kI * theta), {}, {}, Complex{1.0, 0.0}}};
}

Operator2 mmi_2x2() {
    const double r = std::sqrt(0.5);
    return Operator2{{Complex{r, 0.0}, Complex{0.0, r}, Complex{0.0, r}, Complex{r, 0.0}}};
}

Operator2 splitter_1x2() {
    const double r = std::sqrt(0.5);
    return Operator2{{Complex{r, 0.0}, {}, {}, Complex{r, 0.0}}};
}

PathState drifted_bb84(Bb84State s, const DriftParams& d) {
    const double c = std::cos(d.varphi);
    const double sn = std::sin(d.varphi);
    const Complex ep = std::exp(kI * d.phi);
    const Complex em = std::exp(-kI * d.phi);
    const double r = std::sqrt(0.5);
    switch (s) {
        case Bb84State::H: return PathState{Complex{c, 0.0}, sn * ep};
        case Bb84State::V: return PathState{-sn * em, Complex{c, 0.0}};
        case Bb84State::D: return PathState{r * (c - sn * em), r * (sn * ep + c)};
        case Bb84State::A: return PathState{r * (c + sn * em), r * (sn * ep - c)};
    }
    throw std::logic_error("drifted_bb84: bad state");
}

Complex inner_product(const PathState& a, const PathState& b) {
    return std::conj(a.alpha) * b.alpha + std::conj(a.beta) * b.beta;
}

}  // namespace polarsim
