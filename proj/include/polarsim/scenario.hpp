#pragma once
// Scenario runner: declarative JSON configs, per-kind defaults, and the
// experiment drivers that emit plot-ready CSV series and JSON reports.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "polarsim/feedback.hpp"
#include "polarsim/security.hpp"

namespace polarsim {

enum class ScenarioKind { PovmTable, Stability, Scramble, Sweep, KeyRate };
enum class SimMode { Expectation, MonteCarlo };

std::string to_string(ScenarioKind kind);
std::string to_string(SimMode mode);
std::optional<ScenarioKind> scenario_kind_from(const std::string& name);
std::optional<SimMode> sim_mode_from(const std::string& name);

// Parse failures carry a human-readable location (line / field / JSON key).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Calibrated operating points of the reference links (per-distance source
// parameters and measured channel budgets).
struct LinkPreset {
    double km;
    double channel_db;
    double mu, nu, p_mu, p_nu, p_z, p_x;
};

// Preset for one of the calibrated distances, or nullptr.
const LinkPreset* reference_link(double km);

struct Scenario {
    ScenarioKind kind = ScenarioKind::PovmTable;
    SimMode mode = SimMode::Expectation;
    std::uint64_t seed = 1;
    double duration_s = 200.0;
    double window_s = 1.0;
    std::string output_dir = "out";
    std::string tally_file;                          // keyrate input
    std::vector<double> distances_km{25.0, 50.0, 75.0, 100.0};
    bool use_reference_presets = true;               // sweep: apply LinkPresets
    bool use_tally_source = true;                    // keyrate: prefer source embedded in the file
    PhaseSettings settings = PhaseSettings::nominal();
    SourceConfig source;
    ChannelConfig channel;
    DetectorConfig detector;
    FeedbackConfig feedback;
    SecurityParams security;

    static Scenario defaults_for(ScenarioKind kind);
    static Scenario from_json_text(const std::string& text);  // throws ParseError
    static Scenario from_file(const std::string& path);       // throws ParseError / ios errors
    std::string to_json_text() const;                         // canonical form
    std::uint64_t config_hash() const;
    void validate() const;
};

struct RunReport {
    int exit_code = 0;  // 0 ok, 1 non-convergence, 2 invalid input
    std::string summary;
    std::string report_json;
    std::vector<std::string> files_written;
};

// Dispatches on scenario kind; writes output files under output_dir.
RunReport run_scenario(const Scenario& scn);

// Tally file IO. CSV columns: basis,intensity,n,m,duration_s with one row
// per (Z|X) x (mu|nu). ASCII, '.' decimal separator, '#' comment lines.
// Writers embed the producing source parameters as a '# source ...'
// comment; the loader hands them back so an analysis replays with the
// parameters the tally was taken under.
TallyBlock load_tally_csv(const std::string& path,
                          std::optional<SourceConfig>* embedded_source = nullptr);
void save_tally_csv(const std::string& path, const TallyBlock& tally,
                    const std::string& meta_comment, const SourceConfig* source = nullptr);

}  // namespace polarsim
