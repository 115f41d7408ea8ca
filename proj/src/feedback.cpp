#include "polarsim/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polarsim {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

bool below_thresholds(const ControllerState& st, const FeedbackConfig& cfg) {
    return st.has_estimate() && st.last_e_z <= cfg.e_z_threshold &&
           st.last_e_x <= cfg.e_x_threshold;
}

std::optional<QberSample> evaluate(const QberMeasure& measure, ControllerState& st,
                                   const FeedbackConfig& cfg) {
    const auto q = measure(st.voltages);
    st.evaluations += 1;
    st.elapsed_s += cfg.window_s;
    if (q) {
        st.last_e_z = q->e_z;
        st.last_e_x = q->e_x;
        st.trace.push_back(TraceEntry{st.cycle, st.elapsed_s, st.voltages.v, q->e_z, q->e_x,
                                      below_thresholds(st, cfg)});
    }
    return q;
}

// Phase-equivalent voltage one full 2pi period away, or a negative value
// when the law cannot provide one in that direction.
double shift_one_period(const ShifterCalibration& cal, double v, double direction) {
    if (cal.law == PhaseLaw::Linear) return v + direction * 2.0 * cal.v_pi;
    const double v2 = v * v + direction * 2.0 * cal.v_pi * cal.v_pi;
    return v2 >= 0.0 ? std::sqrt(v2) : -1.0;
}

// Clamped voltage write with the stuck-at-clamp re-center: a target pushed
// past a boundary the shifter already sits on jumps one period toward the
// interior instead of pinning.
void write_voltage(ControllerState& st, const FeedbackConfig& cfg, int idx, double target) {
    const double previous = st.voltages.v[static_cast<std::size_t>(idx)];
    double v = std::clamp(target, cfg.v_min, cfg.v_max);
    if (v != target) {
        const bool at_top = v >= cfg.v_max;
        const bool stuck = previous == v;
        st.events.push_back("clamp PS" + std::to_string(idx + 1));
        if (stuck) {
            const double jumped = shift_one_period(cfg.calibration, v, at_top ? -1.0 : 1.0);
            if (jumped >= cfg.v_min && jumped <= cfg.v_max) {
                v = jumped;
                st.events.push_back("recenter PS" + std::to_string(idx + 1));
            }
        }
    }
    st.voltages.v[static_cast<std::size_t>(idx)] = v;
    st.elapsed_s += cfg.settle_delay_s;
}

// Raw dither write: clamp only, no event logging, no re-centering.
double write_dither(ControllerState& st, const FeedbackConfig& cfg, int idx, double target) {
    const double v = std::clamp(target, cfg.v_min, cfg.v_max);
    st.voltages.v[static_cast<std::size_t>(idx)] = v;
    st.elapsed_s += cfg.settle_delay_s;
    return v;
}

}  // namespace

std::vector<GainScheduleEntry> FeedbackConfig::default_schedule(double v_pi) {
    // Coarse-to-fine: large dithers and steps while the error is far from
    // threshold, small ones for the final approach. Gains sized so that
    // gain * d2E/dv2 stays below 2 over the actuator range (the quadratic
    // law reaches ~2pi V_pi^-2 * v in slope, ~150 V^-2 in curvature scale).
    return {
        GainScheduleEntry{0.10, 0.05 * v_pi, 0.020},
        GainScheduleEntry{0.02, 0.02 * v_pi, 0.012},
        GainScheduleEntry{0.00, 0.01 * v_pi, 0.008},
    };
}

const GainScheduleEntry& FeedbackConfig::entry_for(double qber) const {
    for (const auto& e : schedule)
        if (qber >= e.qber_at_least) return e;
    return schedule.back();
}

void FeedbackConfig::validate() const {
    if (!(e_z_threshold > 0.0) || !(e_z_threshold < 0.5) || !(e_x_threshold > 0.0) ||
        !(e_x_threshold < 0.5))
        throw std::domain_error("feedback: thresholds must be in (0, 0.5)");
    if (schedule.empty()) throw std::domain_error("feedback: schedule must not be empty");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (!(schedule[i].dither_v > 0.0) || !(schedule[i].step_gain > 0.0))
            throw std::domain_error("feedback: dither and gain must be > 0");
        if (i > 0 && schedule[i].qber_at_least > schedule[i - 1].qber_at_least)
            throw std::domain_error("feedback: schedule must be sorted descending");
    }
    if (max_cycles < 1) throw std::domain_error("feedback: max_cycles must be >= 1");
    if (!(window_s > 0.0)) throw std::domain_error("feedback: window must be > 0");
    if (!(settle_delay_s >= 0.0)) throw std::domain_error("feedback: settle delay must be >= 0");
    if (!(v_min < v_max)) throw std::domain_error("feedback: need v_min < v_max");
}

PhaseSettings ControllerState::settings(const ShifterCalibration& cal) const {
    PhaseSettings s;
    s.theta1 = voltage_to_phase(cal, voltages.v[0]);
    s.theta2 = voltage_to_phase(cal, voltages.v[1]);
    s.theta3 = voltage_to_phase(cal, voltages.v[2]);
    s.theta4 = voltage_to_phase(cal, voltages.v[3]);
    return s;
}

VoltageState nominal_voltages(const FeedbackConfig& cfg) {
    const auto& cal = cfg.calibration;
    const auto volts_for = [&](double theta) {
        const double t = theta - cal.theta0;
        const double v = cal.law == PhaseLaw::Quadratic ? cal.v_pi * std::sqrt(t / kPi)
                                                        : cal.v_pi * t / kPi;
        return std::clamp(v, cfg.v_min, cfg.v_max);
    };
    VoltageState vs;
    // theta1/theta3 nominally sit at 0; bias them one period up so the
    // quadratic actuator has sensitivity there.
    vs.v[0] = volts_for(2.0 * kPi);
    vs.v[1] = volts_for(kPi);
    vs.v[2] = volts_for(2.0 * kPi);
    vs.v[3] = volts_for(0.5 * kPi);
    return vs;
}

std::optional<double> estimate_gradient_pair(const QberMeasure& measure, ControllerState& state,
                                             const FeedbackConfig& cfg, Basis basis, int shifter,
                                             double dither_v) {
    if (!(dither_v > 0.0)) throw std::domain_error("estimate_gradient_pair: dither must be > 0");
    const bool z_shifter = shifter == 1 || shifter == 2;
    if (shifter < 1 || shifter > 4 || (basis == Basis::Z) != z_shifter)
        throw std::domain_error("estimate_gradient_pair: shifter does not drive this basis");
    const int idx = shifter - 1;
    const double v0 = state.voltages.v[static_cast<std::size_t>(idx)];

    const double vp = write_dither(state, cfg, idx, v0 + dither_v);
    const auto up = evaluate(measure, state, cfg);
    const double vm = write_dither(state, cfg, idx, v0 - dither_v);
    const auto dn = evaluate(measure, state, cfg);
    write_dither(state, cfg, idx, v0);  // restore

    if (!up || !dn) return std::nullopt;
    const double span = vp - vm;
    if (!(span > 0.0)) return std::nullopt;  // dither collapsed on the limits
    const double e_up = basis == Basis::Z ? up->e_z : up->e_x;
    const double e_dn = basis == Basis::Z ? dn->e_z : dn->e_x;
    return (e_up - e_dn) / span;
}

CycleOutcome feedback_cycle(const QberMeasure& measure, ControllerState& state,
                            const FeedbackConfig& cfg) {
    cfg.validate();
    // Threshold check on the freshest estimate; measure only if none exists.
    if (!state.has_estimate() && !evaluate(measure, state, cfg)) return CycleOutcome::NoData;
    if (below_thresholds(state, cfg)) return CycleOutcome::Converged;

    const auto& gain = cfg.entry_for(std::max(state.last_e_z, state.last_e_x));

    // Inner shifters: PS1 against E_Z, PS3 against E_X.
    const auto g1 = estimate_gradient_pair(measure, state, cfg, Basis::Z, 1, gain.dither_v);
    const auto g3 = estimate_gradient_pair(measure, state, cfg, Basis::X, 3, gain.dither_v);
    if (!g1 || !g3) return CycleOutcome::NoData;
    write_voltage(state, cfg, 0, state.voltages.v[0] - gain.step_gain * *g1);
    write_voltage(state, cfg, 2, state.voltages.v[2] - gain.step_gain * *g3);

    if (!evaluate(measure, state, cfg)) return CycleOutcome::NoData;
    if (below_thresholds(state, cfg)) {
        state.cycle += 1;
        return CycleOutcome::Converged;
    }

    // Outer shifters: PS2 against E_Z, PS4 against E_X.
    const auto g2 = estimate_gradient_pair(measure, state, cfg, Basis::Z, 2, gain.dither_v);
    const auto g4 = estimate_gradient_pair(measure, state, cfg, Basis::X, 4, gain.dither_v);
    if (!g2 || !g4) return CycleOutcome::NoData;
    write_voltage(state, cfg, 1, state.voltages.v[1] - gain.step_gain * *g2);
    write_voltage(state, cfg, 3, state.voltages.v[3] - gain.step_gain * *g4);

    if (!evaluate(measure, state, cfg)) return CycleOutcome::NoData;
    state.cycle += 1;
    return below_thresholds(state, cfg) ? CycleOutcome::Converged : CycleOutcome::Continue;
}

FeedbackResult run_feedback(const QberMeasure& measure, ControllerState& state,
                            const FeedbackConfig& cfg) {
    cfg.validate();
    FeedbackResult result;
    for (int attempt = 0; attempt < cfg.max_cycles; ++attempt) {
        if (cfg.max_evaluations > 0 && state.evaluations >= cfg.max_evaluations) break;
        const CycleOutcome out = feedback_cycle(measure, state, cfg);
        if (out == CycleOutcome::Converged) {
            result.converged = true;
            break;
        }
    }
    result.cycles = state.cycle;
    result.evaluations = state.evaluations;
    result.e_z = state.last_e_z;
    result.e_x = state.last_e_x;
    result.elapsed_s = state.elapsed_s;
    return result;
}

}  // namespace polarsim
