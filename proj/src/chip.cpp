#include "polarsim/chip.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace polarsim {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr Complex kI{0.0, 1.0};

// Transfer matrix of one polarization controller: U R(theta_outer) U
// R(theta_inner) S, i.e. splitter, inner shifter, coupler, outer shifter,
// coupler. Norm^2 of each output row sums to 1/2 (the splitter's share).
Operator2 controller_chain(double theta_inner, double theta_outer) {
    const Operator2 u = mmi_2x2();
    return u * phase_shifter(theta_outer) * u * phase_shifter(theta_inner) * splitter_1x2();
}

}  // namespace

PhaseSettings PhaseSettings::nominal() { return PhaseSettings{0.0, kPi, 0.0, 0.5 * kPi}; }

Operator2 measurement_operator(Port port, const PhaseSettings& s) {
    const bool z_side = port == Port::H || port == Port::V;
    const double inner = z_side ? s.theta1 : s.theta3;
    const double outer = z_side ? s.theta2 : s.theta4;
    const double c = std::cos(outer);
    const double sn = std::sin(outer);
    const Complex cross = std::exp(-kI * inner) * sn;
    const double k = std::sqrt(2.0) / 4.0;
    // Ports H and D take the (1-cos) diagonal, V and A the (1+cos) one with
    // the off-diagonal sign flipped.
    const double sign = (port == Port::H || port == Port::D) ? 1.0 : -1.0;
    Operator2 m;
    m.m[0] = Complex{k * (1.0 - sign * c), 0.0};
    m.m[1] = sign * k * cross;
    m.m[2] = sign * k * std::conj(cross);
    m.m[3] = Complex{k * (1.0 + sign * c), 0.0};
    return m;
}

PortProbabilities detection_probabilities(const PathState& state, const PhaseSettings& s) {
    if (std::abs(state.norm2() - 1.0) > 1e-9)
        throw std::domain_error("detection_probabilities: state must be unit norm");
    const Operator2 cz = controller_chain(s.theta1, s.theta2);
    const Operator2 cx = controller_chain(s.theta3, s.theta4);
    const PathState z = cz.apply(state);
    const PathState x = cx.apply(state);
    PortProbabilities out;
    out.p[0] = std::norm(z.alpha);
    out.p[1] = std::norm(z.beta);
    out.p[2] = std::norm(x.alpha);
    out.p[3] = std::norm(x.beta);
    return out;
}

PhaseSettings solve_compensation(const DriftParams& d) {
    PhaseSettings s;
    // Z side: undo the retardation with the inner shifter and fold the
    // basis rotation into the interferometer angle.
    s.theta1 = d.phi;
    s.theta2 = kPi - 2.0 * d.varphi;
    // X side: route the drifted |D> amplitude pair entirely to port D.
    const PathState dd = drifted_bb84(Bb84State::D, d);
    const double a = std::abs(dd.alpha);
    const double b = std::abs(dd.beta);
    s.theta3 = (a * b < 1e-15) ? 0.0 : -std::arg(dd.alpha * std::conj(dd.beta));
    s.theta4 = std::atan2(2.0 * a * b, b * b - a * a);
    return s;
}

double voltage_to_phase(const ShifterCalibration& cal, double volts) {
    if (!(cal.v_pi > 0.0)) throw std::domain_error("voltage_to_phase: v_pi must be > 0");
    if (!(volts >= 0.0)) throw std::domain_error("voltage_to_phase: voltage must be >= 0");
    const double r = volts / cal.v_pi;
    return cal.theta0 + (cal.law == PhaseLaw::Quadratic ? kPi * r * r : kPi * r);
}

ErCurve extinction_ratio(std::span<const ErSample> sweep) {
    if (sweep.size() < 2) throw std::domain_error("extinction_ratio: need at least 2 samples");
    double imin = std::numeric_limits<double>::infinity();
    for (const auto& s : sweep) {
        if (!(s.intensity >= 0.0))
            throw std::domain_error("extinction_ratio: intensities must be >= 0");
        imin = std::min(imin, s.intensity);
    }
    ErCurve out;
    out.curve_db.reserve(sweep.size());
    if (imin <= 0.0) {
        out.unbounded = true;
        const double inf = std::numeric_limits<double>::infinity();
        for (const auto& s : sweep) out.curve_db.push_back(s.intensity > 0.0 ? inf : 0.0);
        out.er_max_db = inf;
        return out;
    }
    out.er_max_db = 0.0;
    for (const auto& s : sweep) {
        const double er = 10.0 * std::log10(s.intensity / imin);
        out.curve_db.push_back(er);
        out.er_max_db = std::max(out.er_max_db, er);
    }
    return out;
}

double apply_voa(double intensity, double db) {
    if (!(db >= 0.0)) throw std::domain_error("apply_voa: attenuation must be >= 0 dB");
    return intensity * std::pow(10.0, -db / 10.0);
}

}  // namespace polarsim
