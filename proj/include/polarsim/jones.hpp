#pragma once
// Exact complex 2x2 linear algebra for polarization/path qubits: states,
// elementary circuit operators, and drifted BB84 input states.

#include <array>
#include <complex>

namespace polarsim {

using Complex = std::complex<double>;

// Absolute tolerance used by the analytic invariants of the 2x2 algebra.
inline constexpr double kAnalyticTol = 1e-12;

// Unit-norm amplitude pair (alpha, beta) of a path-encoded qubit. The
// polarization splitter-rotator maps the H/V polarization components onto
// the two path amplitudes one-to-one, so the same type describes both.
struct PathState {
    Complex alpha{1.0, 0.0};
    Complex beta{0.0, 0.0};

    double norm2() const { return std::norm(alpha) + std::norm(beta); }
};

// Dense 2x2 complex matrix acting on path states. Row-major entries.
struct Operator2 {
    std::array<Complex, 4> m{};

    static Operator2 identity();

    Complex at(int row, int col) const { return m[static_cast<std::size_t>(2 * row + col)]; }

    PathState apply(const PathState& s) const;
    Operator2 compose(const Operator2& rhs) const;  // (*this) * rhs
    Operator2 adjoint() const;

    bool is_unitary(double tol = kAnalyticTol) const;
    bool is_hermitian_psd(double tol = kAnalyticTol) const;
};

Operator2 operator*(const Operator2& a, const Operator2& b);

// The four BB84 polarization states; Z basis is {H, V}, X basis is {D, A}.
enum class Bb84State { H, V, D, A };

// Basis partner of a state (H<->V, D<->A).
Bb84State conjugate_state(Bb84State s);

// Fiber drift: rotation angle of the polarization basis (varphi) and the
// retardation between the H and V components (phi). Canonicalized to
// varphi in [0, pi) and phi in [-pi, pi); the canonical form differs from
// the raw angles by at most a global phase of the drifted states.
struct DriftParams {
    double varphi = 0.0;
    double phi = 0.0;

    DriftParams() = default;
    DriftParams(double varphi_rad, double phi_rad);  // canonicalizes; throws on non-finite
};

// Normalized path state from an arbitrary nonzero amplitude pair.
// Throws std::domain_error for the zero vector or non-finite input.
PathState make_state(Complex alpha, Complex beta);

// Thermal phase shifter: diag(e^{i theta}, 1).
Operator2 phase_shifter(double theta);

// Balanced 2x2 multimode interference coupler: (sqrt(2)/2) [[1, i], [i, 1]].
Operator2 mmi_2x2();

// 1x2 splitter amplitude factor: (sqrt(2)/2) I. Routes half the power into
// each of the two polarization controllers.
Operator2 splitter_1x2();

// The BB84 state `s` after propagating through a drifted fiber.
PathState drifted_bb84(Bb84State s, const DriftParams& d);

// <a|b>
Complex inner_product(const PathState& a, const PathState& b);

}  // namespace polarsim
