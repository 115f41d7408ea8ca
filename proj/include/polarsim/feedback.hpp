#pragma once
// Gradient-descent polarization compensation: a controller that dithers
// shifter voltages, estimates QBER gradients from paired measurements, and
// alternates updates between the inner (PS1/PS3) and outer (PS2/PS4)
// shifters of the two controllers until both basis QBERs sit below their
// thresholds.

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "polarsim/chip.hpp"
#include "polarsim/link.hpp"

namespace polarsim {

// Actuator state: one voltage per shifter plus the two balance trims.
struct VoltageState {
    std::array<double, 4> v{0.0, 0.0, 0.0, 0.0};
    double voa_z_db = 0.0;
    double voa_x_db = 0.0;
};

// One QBER evaluation window.
struct QberSample {
    double e_z = 0.0;
    double e_x = 0.0;
};

// Evaluates (E_Z, E_X) over one measurement window at the given voltages.
// nullopt signals a no-data window (empty tallies); the controller retries.
using QberMeasure = std::function<std::optional<QberSample>(const VoltageState&)>;

// Dither size and step gain used while the worst-basis QBER is at least
// `qber_at_least`. Gain carries volts^2 per unit QBER so v - gain*G stays
// in volts.
struct GainScheduleEntry {
    double qber_at_least = 0.0;
    double dither_v = 0.0;
    double step_gain = 0.0;
};

struct FeedbackConfig {
    double e_z_threshold = 0.015;
    double e_x_threshold = 0.015;
    std::vector<GainScheduleEntry> schedule;  // sorted descending by qber_at_least
    int max_cycles = 60;
    int max_evaluations = 500;  // 0 = unlimited
    double window_s = 1.0;
    double settle_delay_s = 1.0 / 3000.0;  // shifter response time per voltage write
    double v_min = 0.0;
    double v_max = 1.8;
    ShifterCalibration calibration{};

    static std::vector<GainScheduleEntry> default_schedule(double v_pi);
    const GainScheduleEntry& entry_for(double qber) const;
    void validate() const;
};

struct TraceEntry {
    int cycle = 0;
    double t_s = 0.0;
    std::array<double, 4> v{};
    double e_z = 0.0;
    double e_x = 0.0;
    bool converged = false;
};

struct ControllerState {
    VoltageState voltages;
    int cycle = 0;
    int evaluations = 0;
    double elapsed_s = 0.0;
    double last_e_z = -1.0;  // negative = no estimate yet
    double last_e_x = -1.0;
    std::vector<TraceEntry> trace;
    std::vector<std::string> events;  // clamp / re-center log

    bool has_estimate() const { return last_e_z >= 0.0 && last_e_x >= 0.0; }

    // Voltages mapped through the calibration; PS1..PS4 -> theta1..theta4.
    PhaseSettings settings(const ShifterCalibration& cal) const;
};

// Nominal starting voltages: phase-equivalent to the nominal settings but
// biased one full period up where the nominal phase is zero, so the
// quadratic actuator starts with usable sensitivity on every shifter.
VoltageState nominal_voltages(const FeedbackConfig& cfg);

// Central-difference QBER gradient for one shifter (1-based index; 1,2
// drive the Z basis, 3,4 the X basis). Consumes two measurement windows,
// restores the voltage, returns nullopt when a window had no data or the
// dither collapsed against the actuator limits.
std::optional<double> estimate_gradient_pair(const QberMeasure& measure, ControllerState& state,
                                             const FeedbackConfig& cfg, Basis basis, int shifter,
                                             double dither_v);

enum class CycleOutcome { Converged, Continue, NoData };

// One full pass of the alternating scheme: threshold check, gradient +
// update on PS1/PS3, recheck, gradient + update on PS2/PS4, final check.
CycleOutcome feedback_cycle(const QberMeasure& measure, ControllerState& state,
                            const FeedbackConfig& cfg);

struct FeedbackResult {
    bool converged = false;
    int cycles = 0;
    int evaluations = 0;
    double e_z = -1.0;
    double e_x = -1.0;
    double elapsed_s = 0.0;
};

// Iterates feedback_cycle until convergence, the cycle limit, or the
// evaluation budget. Never throws on non-convergence.
FeedbackResult run_feedback(const QberMeasure& measure, ControllerState& state,
                            const FeedbackConfig& cfg);

}  // namespace polarsim
