#pragma once
// The decoder chip as a function from (input state, shifter settings) to
// port-detection probabilities, plus voltage-to-phase conversion,
// extinction-ratio analysis, and the analytic compensation solver.

#include <span>
#include <vector>

#include "polarsim/jones.hpp"

namespace polarsim {

// Detection ports; H/V terminate the first polarization controller (Z
// basis), D/A the second (X basis).
enum class Port { H = 0, V = 1, D = 2, A = 3 };

// Retardances of the four active phase shifters. Stored un-wrapped (the
// feedback loop may exceed [0, 2pi)); every probability downstream is
// 2pi-periodic in each angle.
struct PhaseSettings {
    double theta1 = 0.0;  // PC1, inner shifter
    double theta2 = 0.0;  // PC1, between the two couplers
    double theta3 = 0.0;  // PC2, inner shifter
    double theta4 = 0.0;  // PC2, between the two couplers

    // Nominal settings (0, pi, 0, pi/2) that realize the Z/X measurement
    // for undrifted inputs.
    static PhaseSettings nominal();
};

struct PortProbabilities {
    std::array<double, 4> p{};  // indexed by Port

    double operator[](Port port) const { return p[static_cast<std::size_t>(port)]; }
    double sum() const { return p[0] + p[1] + p[2] + p[3]; }
};

// Measurement operator M_port; Hermitian positive semi-definite, and the
// POVM element is M^dagger M.
Operator2 measurement_operator(Port port, const PhaseSettings& s);

// Port-detection probabilities from the transfer-matrix product of the
// chip (splitter, shifters, couplers, projection on the output ports).
// Requires a unit-norm state; throws std::domain_error otherwise.
PortProbabilities detection_probabilities(const PathState& state, const PhaseSettings& s);

// Shifter settings that re-diagonalize the measurement for a drifted
// channel: drifted H/V route fully to ports H/V and drifted D/A to D/A.
PhaseSettings solve_compensation(const DriftParams& d);

enum class PhaseLaw { Quadratic, Linear };

// Voltage-to-phase calibration of one thermal shifter. The quadratic law
// models heater power ~ V^2; the linear law is for bench tests.
struct ShifterCalibration {
    double v_pi = 0.72;  // volts for a pi shift
    PhaseLaw law = PhaseLaw::Quadratic;
    double theta0 = 0.0;  // phase at 0 V
};

// Phase produced by `volts` under the calibration; monotone nondecreasing
// on v >= 0. Throws std::domain_error for negative voltage or v_pi <= 0.
double voltage_to_phase(const ShifterCalibration& cal, double volts);

// One point of a shifter-voltage sweep: applied volts and detected
// intensity (photon count rate, arbitrary linear units).
struct ErSample {
    double voltage_v = 0.0;
    double intensity = 0.0;
};

struct ErCurve {
    std::vector<double> curve_db;  // per-sample extinction ratio
    double er_max_db = 0.0;
    bool unbounded = false;  // min intensity was zero; values are +inf sentinels
};

// Extinction ratio 10*log10(I/I_min) per sample and its maximum over the
// sweep. Needs at least two samples and nonnegative intensities.
ErCurve extinction_ratio(std::span<const ErSample> sweep);

// Intensity after a variable optical attenuator of `db` >= 0.
double apply_voa(double intensity, double db);

}  // namespace polarsim
