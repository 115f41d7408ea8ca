#include "polarsim/link.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polarsim {

namespace {

constexpr std::array<Bb84State, 4> kStates{Bb84State::H, Bb84State::V, Bb84State::D,
                                           Bb84State::A};

Basis basis_of(Bb84State s) {
    return (s == Bb84State::H || s == Bb84State::V) ? Basis::Z : Basis::X;
}

int port_of(Bb84State s) { return static_cast<int>(s); }  // Port enumerates like Bb84State

// One (Alice state, intensity) emission class and its per-port click model.
struct Category {
    Basis basis;
    IntensityClass k;
    double slot_prob = 0.0;          // probability a pulse slot is this class
    std::array<double, 4> click{};   // per-port click probability
    int correct_port = 0;
    int error_port = 0;
};

std::array<Category, 8> build_categories(const SourceConfig& src, const DriftParams& drift,
                                         const DetectorConfig& det, const PhaseSettings& settings,
                                         double eta, const ChipTrim& trim) {
    const double dark = det.dark_rate_hz / src.rep_rate_hz * det.dark_gate_duty;
    const double wz = 2.0 * det.bob_basis_prob_z * std::pow(10.0, -trim.voa_z_db / 10.0);
    const double wx = 2.0 * (1.0 - det.bob_basis_prob_z) * std::pow(10.0, -trim.voa_x_db / 10.0);

    std::array<PortProbabilities, 4> routed;
    for (int i = 0; i < 4; ++i)
        routed[static_cast<std::size_t>(i)] =
            detection_probabilities(drifted_bb84(kStates[static_cast<std::size_t>(i)], drift), settings);

    std::array<Category, 8> out;
    std::size_t idx = 0;
    for (int si = 0; si < 4; ++si) {
        const Bb84State state = kStates[static_cast<std::size_t>(si)];
        const Bb84State partner = conjugate_state(state);
        const double p_basis = basis_of(state) == Basis::Z ? src.p_z : src.p_x;
        for (int ki = 0; ki < 2; ++ki) {
            const double mean = ki == 0 ? src.mu : src.nu;
            const double p_int = ki == 0 ? src.p_mu : src.p_nu;
            Category c;
            c.basis = basis_of(state);
            c.k = static_cast<IntensityClass>(ki);
            c.slot_prob = p_basis * 0.5 * p_int;
            c.correct_port = port_of(state);
            c.error_port = port_of(partner);
            for (int port = 0; port < 4; ++port) {
                // intrinsic error mixes in the basis partner's routing
                const double q_main =
                    routed[static_cast<std::size_t>(si)].p[static_cast<std::size_t>(port)];
                const double q_part =
                    routed[static_cast<std::size_t>(port_of(partner))].p[static_cast<std::size_t>(port)];
                const double q_eff =
                    (1.0 - src.intrinsic_error) * q_main + src.intrinsic_error * q_part;
                const double w = port < 2 ? wz : wx;
                const double lam = mean * eta * q_eff * w;
                c.click[static_cast<std::size_t>(port)] = std::clamp(
                    1.0 - std::exp(-lam) * (1.0 - dark), 0.0, 1.0);
            }
            out[idx++] = c;
        }
    }
    return out;
}

// Walk [0, duration) split at drift-schedule boundaries and (optionally)
// fixed-length batch boundaries. fn(t0, dt, drift, batch_index).
template <typename Fn>
void for_each_interval(const ChannelConfig& chan, double duration_s, double batch_s, Fn&& fn) {
    double t = 0.0;
    std::uint64_t batch = 0;
    while (t < duration_s) {
        double end = duration_s;
        if (batch_s > 0.0) {
            batch = static_cast<std::uint64_t>(t / batch_s);
            end = std::min(end, (static_cast<double>(batch) + 1.0) * batch_s);
        }
        // clip at the next drift boundary
        for (const auto& seg : chan.drift_schedule) {
            if (seg.start_s > t + 1e-12 && seg.start_s < end) end = seg.start_s;
        }
        if (!(end > t)) break;
        fn(t, end - t, chan.drift_at(t + 0.5 * (end - t)), batch);
        t = end;
    }
}

}  // namespace

void SourceConfig::validate() const {
    if (!(rep_rate_hz > 0.0)) throw std::domain_error("source: rep_rate must be > 0");
    if (!(mu > nu) || !(nu >= 0.0)) throw std::domain_error("source: need mu > nu >= 0");
    if (std::abs(p_mu + p_nu - 1.0) > 1e-9 || p_mu < 0.0 || p_nu < 0.0)
        throw std::domain_error("source: p_mu + p_nu must equal 1");
    if (std::abs(p_z + p_x - 1.0) > 1e-9 || p_z < 0.0 || p_x < 0.0)
        throw std::domain_error("source: p_z + p_x must equal 1");
    if (!(intrinsic_error >= 0.0) || !(intrinsic_error < 0.5))
        throw std::domain_error("source: intrinsic_error must be in [0, 0.5)");
}

double ChannelConfig::fiber_loss_db() const {
    return fixed_loss_db >= 0.0 ? fixed_loss_db : length_km * atten_db_per_km;
}

DriftParams ChannelConfig::drift_at(double t_s) const {
    DriftParams d;
    for (const auto& seg : drift_schedule) {
        if (seg.start_s <= t_s) d = seg.drift;
        else break;
    }
    return d;
}

void ChannelConfig::validate() const {
    if (!(length_km >= 0.0)) throw std::domain_error("channel: length must be >= 0");
    if (!(atten_db_per_km >= 0.0)) throw std::domain_error("channel: attenuation must be >= 0");
    if (!(extra_loss_db >= 0.0)) throw std::domain_error("channel: extra loss must be >= 0");
    if (scrambler.enabled && !(scrambler.min_interval_s <= scrambler.max_interval_s))
        throw std::domain_error("channel: scrambler min_interval must be <= max_interval");
    for (std::size_t i = 1; i < drift_schedule.size(); ++i)
        if (drift_schedule[i].start_s < drift_schedule[i - 1].start_s)
            throw std::domain_error("channel: drift schedule must be time-ordered");
}

void DetectorConfig::validate() const {
    if (!(efficiency > 0.0) || !(efficiency <= 1.0))
        throw std::domain_error("detector: efficiency must be in (0, 1]");
    if (!(dark_rate_hz >= 0.0)) throw std::domain_error("detector: dark rate must be >= 0");
    if (!(chip_loss_db >= 0.0)) throw std::domain_error("detector: chip loss must be >= 0");
    if (!(bob_basis_prob_z > 0.0) || !(bob_basis_prob_z < 1.0))
        throw std::domain_error("detector: bob_basis_prob_z must be in (0, 1)");
    if (!(dark_gate_duty >= 0.0) || !(dark_gate_duty <= 1.0))
        throw std::domain_error("detector: dark_gate_duty must be in [0, 1]");
}

TallyBlock& TallyBlock::operator+=(const TallyBlock& other) {
    duration_s += other.duration_s;
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 2; ++k) {
            n[b][k] += other.n[b][k];
            m[b][k] += other.m[b][k];
        }
    return *this;
}

double channel_transmittance(const ChannelConfig& chan, const DetectorConfig& det) {
    chan.validate();
    det.validate();
    const double loss_db = chan.fiber_loss_db() + chan.extra_loss_db + det.chip_loss_db;
    return std::pow(10.0, -loss_db / 10.0) * det.efficiency;
}

double click_probability(double mean_photons, double eta, double dark_per_gate) {
    if (!(mean_photons >= 0.0) || !(eta >= 0.0) || !(eta <= 1.0))
        throw std::domain_error("click_probability: bad arguments");
    if (!(dark_per_gate >= 0.0) || !(dark_per_gate <= 1.0))
        throw std::domain_error("click_probability: dark must be in [0, 1]");
    const double p = 1.0 - std::exp(-mean_photons * eta) * (1.0 - dark_per_gate);
    return std::clamp(p, 0.0, 1.0);
}

TallyBlock expected_tally(const SourceConfig& src, const ChannelConfig& chan,
                          const DetectorConfig& det, const PhaseSettings& settings,
                          double duration_s, const ChipTrim& trim) {
    src.validate();
    if (!(duration_s > 0.0)) throw std::domain_error("expected_tally: duration must be > 0");
    const double eta = channel_transmittance(chan, det);

    TallyBlock out;
    out.duration_s = duration_s;
    for_each_interval(chan, duration_s, 0.0, [&](double, double dt, const DriftParams& drift,
                                                 std::uint64_t) {
        const double slots = src.rep_rate_hz * dt;
        const auto cats = build_categories(src, drift, det, settings, eta, trim);
        for (const auto& c : cats) {
            // Exact enumeration of the 16 click patterns with the uniform
            // squashing split for multi-clicks.
            std::array<double, 4> assigned{};
            for (int mask = 1; mask < 16; ++mask) {
                double pm = 1.0;
                int bits = 0;
                for (int j = 0; j < 4; ++j) {
                    const bool on = (mask >> j) & 1;
                    pm *= on ? c.click[static_cast<std::size_t>(j)]
                             : 1.0 - c.click[static_cast<std::size_t>(j)];
                    bits += on ? 1 : 0;
                }
                const double share = pm / bits;
                for (int j = 0; j < 4; ++j)
                    if ((mask >> j) & 1) assigned[static_cast<std::size_t>(j)] += share;
            }
            const double weight = slots * c.slot_prob;
            const int b = static_cast<int>(c.basis);
            const int k = static_cast<int>(c.k);
            out.n[b][k] += weight * (assigned[static_cast<std::size_t>(c.correct_port)] +
                                     assigned[static_cast<std::size_t>(c.error_port)]);
            out.m[b][k] += weight * assigned[static_cast<std::size_t>(c.error_port)];
        }
    });
    return out;
}

TallyBlock sample_tally(const SourceConfig& src, const ChannelConfig& chan,
                        const DetectorConfig& det, const PhaseSettings& settings,
                        double duration_s, std::uint64_t seed, const ChipTrim& trim) {
    src.validate();
    if (!(duration_s >= 0.0)) throw std::domain_error("sample_tally: duration must be >= 0");
    const double eta = channel_transmittance(chan, det);
    const Rng master(seed);

    TallyBlock out;
    out.duration_s = duration_s;
    if (duration_s == 0.0) return out;

    for_each_interval(chan, duration_s, 1.0, [&](double, double dt, const DriftParams& drift,
                                                 std::uint64_t batch) {
        Rng rng = master.derive(batch);
        const auto cats = build_categories(src, drift, det, settings, eta, trim);
        const double slots_total = src.rep_rate_hz * dt;
        for (const auto& c : cats) {
            const auto slots = static_cast<std::int64_t>(std::llround(slots_total * c.slot_prob));
            if (slots <= 0) continue;
            for (int mask = 1; mask < 16; ++mask) {
                double pm = 1.0;
                int bits = 0;
                for (int j = 0; j < 4; ++j) {
                    const bool on = (mask >> j) & 1;
                    pm *= on ? c.click[static_cast<std::size_t>(j)]
                             : 1.0 - c.click[static_cast<std::size_t>(j)];
                    bits += on ? 1 : 0;
                }
                std::int64_t cnt = rng.binomial(slots, pm);
                if (cnt == 0) continue;
                // Uniform assignment among the clicked ports.
                std::array<std::int64_t, 4> per_port{};
                int remaining_ports = bits;
                for (int j = 0; j < 4 && cnt > 0; ++j) {
                    if (!((mask >> j) & 1)) continue;
                    std::int64_t take = remaining_ports == 1
                                            ? cnt
                                            : rng.binomial(cnt, 1.0 / remaining_ports);
                    per_port[static_cast<std::size_t>(j)] = take;
                    cnt -= take;
                    --remaining_ports;
                }
                const int b = static_cast<int>(c.basis);
                const int k = static_cast<int>(c.k);
                const double sifted =
                    static_cast<double>(per_port[static_cast<std::size_t>(c.correct_port)] +
                                        per_port[static_cast<std::size_t>(c.error_port)]);
                out.n[b][k] += sifted;
                out.m[b][k] += static_cast<double>(per_port[static_cast<std::size_t>(c.error_port)]);
            }
        }
    });
    return out;
}

std::optional<double> qber(const TallyBlock& t, Basis basis) {
    const double n = t.n_total(basis);
    if (!(n > 0.0)) return std::nullopt;
    return t.m_total(basis) / n;
}

std::optional<ScrambleEvent> next_scramble(const ScramblerConfig& sched, Rng& rng) {
    if (!sched.enabled) return std::nullopt;
    if (!(sched.min_interval_s <= sched.max_interval_s) || !(sched.min_interval_s >= 0.0))
        throw std::domain_error("next_scramble: bad interval bounds");
    ScrambleEvent ev;
    ev.wait_s = rng.uniform(sched.min_interval_s, sched.max_interval_s);
    const double varphi = rng.uniform(sched.varphi_min, sched.varphi_max);
    const double phi = rng.uniform(sched.phi_min, sched.phi_max);
    ev.drift = DriftParams(varphi, phi);
    return ev;
}

}  // namespace polarsim
