#pragma once
// End-to-end statistical link simulation: decoy-state source, lossy
// drifting channel with scrambler events, chip + detectors. Produces
// per-window tallies and QBER in expectation mode or seeded Monte Carlo.

#include <cstdint>
#include <optional>
#include <vector>

#include "polarsim/chip.hpp"
#include "polarsim/jones.hpp"
#include "polarsim/rng.hpp"

namespace polarsim {

struct SourceConfig {
    double rep_rate_hz = 50e6;
    double mu = 0.679;  // signal mean photon number
    double nu = 0.127;  // decoy mean photon number
    double p_mu = 0.859;
    double p_nu = 0.141;
    double p_z = 0.96;  // Alice basis probabilities
    double p_x = 0.04;
    double intrinsic_error = 0.005;  // encoder misalignment probability

    void validate() const;  // throws std::domain_error
};

struct ScramblerConfig {
    bool enabled = false;
    double min_interval_s = 1200.0;
    double max_interval_s = 1800.0;
    // Distribution of the drift applied at each event.
    double varphi_min = 0.0;
    double varphi_max = 1.5707963267948966;
    double phi_min = -3.141592653589793;
    double phi_max = 3.141592653589793;
};

struct DriftSegment {
    double start_s = 0.0;
    DriftParams drift;
};

struct ChannelConfig {
    double length_km = 0.0;
    double atten_db_per_km = 0.1988;
    double extra_loss_db = 0.0;
    // When >= 0, replaces length*atten as the fiber loss (used to pin the
    // reference link budgets exactly).
    double fixed_loss_db = -1.0;
    // Piecewise-constant drift trajectory; empty means no drift.
    std::vector<DriftSegment> drift_schedule;
    ScramblerConfig scrambler;

    double fiber_loss_db() const;
    DriftParams drift_at(double t_s) const;
    void validate() const;
};

struct DetectorConfig {
    double efficiency = 0.10;
    double dark_rate_hz = 400.0;
    double chip_loss_db = 4.6;
    double bob_basis_prob_z = 0.5;  // passive coupler split; 0.5 unless overridden
    // Fraction of a pulse slot covered by the detection gate; dark counts
    // per slot per detector are dark_rate/rep_rate * duty.
    double dark_gate_duty = 0.15;

    void validate() const;
};

enum class Basis { Z = 0, X = 1 };
enum class IntensityClass { Signal = 0, Decoy = 1 };  // mu, nu

// Per-basis, per-intensity detection and error counts over a measurement
// window. Real-valued in expectation mode, integral in Monte Carlo mode.
struct TallyBlock {
    double duration_s = 0.0;
    double n[2][2] = {{0.0, 0.0}, {0.0, 0.0}};  // [basis][intensity]
    double m[2][2] = {{0.0, 0.0}, {0.0, 0.0}};

    double n_at(Basis b, IntensityClass k) const {
        return n[static_cast<int>(b)][static_cast<int>(k)];
    }
    double m_at(Basis b, IntensityClass k) const {
        return m[static_cast<int>(b)][static_cast<int>(k)];
    }
    double n_total(Basis b) const { return n[static_cast<int>(b)][0] + n[static_cast<int>(b)][1]; }
    double m_total(Basis b) const { return m[static_cast<int>(b)][0] + m[static_cast<int>(b)][1]; }

    TallyBlock& operator+=(const TallyBlock& other);
};

// On-chip attenuation trims applied to the two controller arms.
struct ChipTrim {
    double voa_z_db = 0.0;
    double voa_x_db = 0.0;
};

// Overall transmittance source -> detection: fiber, extra and chip losses,
// then detector efficiency.
double channel_transmittance(const ChannelConfig& chan, const DetectorConfig& det);

// Click probability of one detector: Poissonian signal plus dark counts,
// combined as complement products and clamped to [0, 1].
double click_probability(double mean_photons, double eta, double dark_per_gate);

// Expected (real-valued) tallies over [0, duration_s] with the channel's
// drift trajectory. Squashing rule: multi-click slots are split uniformly
// over the clicked ports.
TallyBlock expected_tally(const SourceConfig& src, const ChannelConfig& chan,
                          const DetectorConfig& det, const PhaseSettings& settings,
                          double duration_s, const ChipTrim& trim = {});

// Seeded Monte Carlo tallies; identical (seed, config) gives identical
// output. The duration is partitioned into batches with independent
// derived RNG streams, so tallies merge associatively.
TallyBlock sample_tally(const SourceConfig& src, const ChannelConfig& chan,
                        const DetectorConfig& det, const PhaseSettings& settings,
                        double duration_s, std::uint64_t seed, const ChipTrim& trim = {});

// Sifted error fraction for one basis; nullopt when the basis has no counts.
std::optional<double> qber(const TallyBlock& t, Basis basis);

struct ScrambleEvent {
    double wait_s = 0.0;  // time from now to the event
    DriftParams drift;    // drift applied at the event
};

// Next scrambler event, or nullopt when the scrambler is disabled.
std::optional<ScrambleEvent> next_scramble(const ScramblerConfig& sched, Rng& rng);

}  // namespace polarsim
