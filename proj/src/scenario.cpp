#include "polarsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "polarsim/version.hpp"

namespace polarsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr LinkPreset kReferenceLinks[] = {
    {25.0, 4.97, 0.679, 0.127, 0.859, 0.141, 0.960, 0.040},
    {50.0, 9.73, 0.654, 0.151, 0.809, 0.191, 0.943, 0.057},
    {75.0, 14.22, 0.626, 0.176, 0.726, 0.274, 0.907, 0.093},
    {100.0, 18.68, 0.569, 0.185, 0.598, 0.402, 0.761, 0.239},
};

// Nominal four-port probabilities for undrifted inputs (rows H, V, D, A).
constexpr double kNominalTable[4][4] = {
    {0.5, 0.0, 0.25, 0.25},
    {0.0, 0.5, 0.25, 0.25},
    {0.25, 0.25, 0.5, 0.0},
    {0.25, 0.25, 0.0, 0.5},
};

std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ParseError(where + ": " + what);
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(where, "expected a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known) fail(where, "unknown key '" + item.key() + "'");
    }
}

double get_num(const json& j, const std::string& where, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) fail(where, std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

bool get_bool(const json& j, const std::string& where, const char* key, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) fail(where, std::string("'") + key + "' must be a boolean");
    return j.at(key).get<bool>();
}

std::string get_str(const json& j, const std::string& where, const char* key,
                    const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) fail(where, std::string("'") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

void read_source(const json& j, SourceConfig& s) {
    const std::string where = "source";
    check_keys(j, where,
               {"rep_rate_hz", "mu", "nu", "p_mu", "p_nu", "p_z", "p_x", "intrinsic_error"});
    s.rep_rate_hz = get_num(j, where, "rep_rate_hz", s.rep_rate_hz);
    s.mu = get_num(j, where, "mu", s.mu);
    s.nu = get_num(j, where, "nu", s.nu);
    s.p_mu = get_num(j, where, "p_mu", s.p_mu);
    s.p_nu = get_num(j, where, "p_nu", s.p_nu);
    s.p_z = get_num(j, where, "p_z", s.p_z);
    s.p_x = get_num(j, where, "p_x", s.p_x);
    s.intrinsic_error = get_num(j, where, "intrinsic_error", s.intrinsic_error);
}

void read_channel(const json& j, ChannelConfig& c) {
    const std::string where = "channel";
    check_keys(j, where,
               {"length_km", "atten_db_per_km", "extra_loss_db", "fixed_loss_db", "drift",
                "drift_schedule", "scrambler"});
    c.length_km = get_num(j, where, "length_km", c.length_km);
    c.atten_db_per_km = get_num(j, where, "atten_db_per_km", c.atten_db_per_km);
    c.extra_loss_db = get_num(j, where, "extra_loss_db", c.extra_loss_db);
    c.fixed_loss_db = get_num(j, where, "fixed_loss_db", c.fixed_loss_db);
    if (j.contains("drift") && j.contains("drift_schedule"))
        fail(where, "give either 'drift' or 'drift_schedule', not both");
    if (j.contains("drift")) {
        const auto& d = j.at("drift");
        check_keys(d, where + ".drift", {"varphi_rad", "phi_rad"});
        c.drift_schedule = {DriftSegment{
            0.0, DriftParams(get_num(d, where, "varphi_rad", 0.0), get_num(d, where, "phi_rad", 0.0))}};
    }
    if (j.contains("drift_schedule")) {
        if (!j.at("drift_schedule").is_array()) fail(where, "'drift_schedule' must be an array");
        c.drift_schedule.clear();
        std::size_t i = 0;
        for (const auto& seg : j.at("drift_schedule")) {
            const std::string sw = where + ".drift_schedule[" + std::to_string(i++) + "]";
            check_keys(seg, sw, {"start_s", "varphi_rad", "phi_rad"});
            c.drift_schedule.push_back(
                DriftSegment{get_num(seg, sw, "start_s", 0.0),
                             DriftParams(get_num(seg, sw, "varphi_rad", 0.0),
                                         get_num(seg, sw, "phi_rad", 0.0))});
        }
    }
    if (j.contains("scrambler")) {
        const auto& s = j.at("scrambler");
        const std::string sw = where + ".scrambler";
        check_keys(s, sw,
                   {"enabled", "min_interval_s", "max_interval_s", "varphi_min", "varphi_max",
                    "phi_min", "phi_max"});
        c.scrambler.enabled = get_bool(s, sw, "enabled", c.scrambler.enabled);
        c.scrambler.min_interval_s = get_num(s, sw, "min_interval_s", c.scrambler.min_interval_s);
        c.scrambler.max_interval_s = get_num(s, sw, "max_interval_s", c.scrambler.max_interval_s);
        c.scrambler.varphi_min = get_num(s, sw, "varphi_min", c.scrambler.varphi_min);
        c.scrambler.varphi_max = get_num(s, sw, "varphi_max", c.scrambler.varphi_max);
        c.scrambler.phi_min = get_num(s, sw, "phi_min", c.scrambler.phi_min);
        c.scrambler.phi_max = get_num(s, sw, "phi_max", c.scrambler.phi_max);
    }
}

void read_detector(const json& j, DetectorConfig& d) {
    const std::string where = "detector";
    check_keys(j, where,
               {"efficiency", "dark_rate_hz", "chip_loss_db", "bob_basis_prob_z",
                "dark_gate_duty"});
    d.efficiency = get_num(j, where, "efficiency", d.efficiency);
    d.dark_rate_hz = get_num(j, where, "dark_rate_hz", d.dark_rate_hz);
    d.chip_loss_db = get_num(j, where, "chip_loss_db", d.chip_loss_db);
    d.bob_basis_prob_z = get_num(j, where, "bob_basis_prob_z", d.bob_basis_prob_z);
    d.dark_gate_duty = get_num(j, where, "dark_gate_duty", d.dark_gate_duty);
}

void read_feedback(const json& j, FeedbackConfig& f) {
    const std::string where = "feedback";
    check_keys(j, where,
               {"e_z_threshold", "e_x_threshold", "schedule", "max_cycles", "max_evaluations",
                "window_s", "settle_delay_s", "v_min", "v_max", "calibration"});
    f.e_z_threshold = get_num(j, where, "e_z_threshold", f.e_z_threshold);
    f.e_x_threshold = get_num(j, where, "e_x_threshold", f.e_x_threshold);
    f.max_cycles = static_cast<int>(get_num(j, where, "max_cycles", f.max_cycles));
    f.max_evaluations = static_cast<int>(get_num(j, where, "max_evaluations", f.max_evaluations));
    f.window_s = get_num(j, where, "window_s", f.window_s);
    f.settle_delay_s = get_num(j, where, "settle_delay_s", f.settle_delay_s);
    f.v_min = get_num(j, where, "v_min", f.v_min);
    f.v_max = get_num(j, where, "v_max", f.v_max);
    if (j.contains("calibration")) {
        const auto& c = j.at("calibration");
        const std::string cw = where + ".calibration";
        check_keys(c, cw, {"v_pi", "law", "theta0"});
        f.calibration.v_pi = get_num(c, cw, "v_pi", f.calibration.v_pi);
        f.calibration.theta0 = get_num(c, cw, "theta0", f.calibration.theta0);
        const std::string law = get_str(c, cw, "law",
                                        f.calibration.law == PhaseLaw::Quadratic ? "quadratic"
                                                                                 : "linear");
        if (law == "quadratic") f.calibration.law = PhaseLaw::Quadratic;
        else if (law == "linear") f.calibration.law = PhaseLaw::Linear;
        else fail(cw, "'law' must be 'quadratic' or 'linear'");
    }
    if (j.contains("schedule")) {
        if (!j.at("schedule").is_array()) fail(where, "'schedule' must be an array");
        f.schedule.clear();
        std::size_t i = 0;
        for (const auto& e : j.at("schedule")) {
            const std::string sw = where + ".schedule[" + std::to_string(i++) + "]";
            check_keys(e, sw, {"qber_at_least", "dither_v", "step_gain"});
            f.schedule.push_back(GainScheduleEntry{get_num(e, sw, "qber_at_least", 0.0),
                                                   get_num(e, sw, "dither_v", 0.0),
                                                   get_num(e, sw, "step_gain", 0.0)});
        }
    }
}

void read_security(const json& j, SecurityParams& s) {
    const std::string where = "security";
    check_keys(j, where, {"eps_sec", "eps_cor", "f_ec", "n_pulses", "budget"});
    s.eps_sec = get_num(j, where, "eps_sec", s.eps_sec);
    s.eps_cor = get_num(j, where, "eps_cor", s.eps_cor);
    s.f_ec = get_num(j, where, "f_ec", s.f_ec);
    s.n_pulses = get_num(j, where, "n_pulses", s.n_pulses);
    if (j.contains("budget")) {
        const auto& b = j.at("budget");
        check_keys(b, where + ".budget", {"bound_failures"});
        s.budget.bound_failures = get_num(b, where, "bound_failures", s.budget.bound_failures);
    }
}

json settings_json(const PhaseSettings& s) {
    return json{{"theta1", s.theta1}, {"theta2", s.theta2}, {"theta3", s.theta3},
                {"theta4", s.theta4}};
}

json drift_schedule_json(const std::vector<DriftSegment>& sched) {
    json arr = json::array();
    for (const auto& seg : sched)
        arr.push_back(json{{"start_s", seg.start_s},
                           {"varphi_rad", seg.drift.varphi},
                           {"phi_rad", seg.drift.phi}});
    return arr;
}

}  // namespace

std::string to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::PovmTable: return "povm-table";
        case ScenarioKind::Stability: return "stability";
        case ScenarioKind::Scramble: return "scramble";
        case ScenarioKind::Sweep: return "sweep";
        case ScenarioKind::KeyRate: return "keyrate";
    }
    return "?";
}

std::string to_string(SimMode mode) {
    return mode == SimMode::Expectation ? "expect" : "mc";
}

std::optional<ScenarioKind> scenario_kind_from(const std::string& name) {
    if (name == "povm-table" || name == "povm") return ScenarioKind::PovmTable;
    if (name == "stability") return ScenarioKind::Stability;
    if (name == "scramble") return ScenarioKind::Scramble;
    if (name == "sweep") return ScenarioKind::Sweep;
    if (name == "keyrate") return ScenarioKind::KeyRate;
    return std::nullopt;
}

std::optional<SimMode> sim_mode_from(const std::string& name) {
    if (name == "expect" || name == "expectation") return SimMode::Expectation;
    if (name == "mc" || name == "montecarlo") return SimMode::MonteCarlo;
    return std::nullopt;
}

const LinkPreset* reference_link(double km) {
    for (const auto& p : kReferenceLinks)
        if (std::abs(p.km - km) < 1e-9) return &p;
    return nullptr;
}

Scenario Scenario::defaults_for(ScenarioKind kind) {
    Scenario s;
    s.kind = kind;
    s.feedback.schedule = FeedbackConfig::default_schedule(s.feedback.calibration.v_pi);
    switch (kind) {
        case ScenarioKind::PovmTable:
            s.duration_s = 1.0;
            break;
        case ScenarioKind::Stability:
            s.duration_s = 36000.0;
            s.window_s = 300.0;
            s.source.mu = 0.6;
            s.source.nu = 0.1;
            s.source.p_mu = 1.0;
            s.source.p_nu = 0.0;
            s.source.p_z = 0.5;
            s.source.p_x = 0.5;
            s.channel.length_km = 0.0;
            break;
        case ScenarioKind::Scramble:
            s.mode = SimMode::MonteCarlo;
            s.duration_s = 10800.0;
            s.window_s = 1.0;
            s.source.mu = 0.6;
            s.source.nu = 0.1;
            s.source.p_mu = 1.0;
            s.source.p_nu = 0.0;
            s.source.p_z = 0.5;
            s.source.p_x = 0.5;
            s.channel.length_km = 75.0;
            s.channel.fixed_loss_db = 14.22;
            s.channel.scrambler.enabled = true;
            break;
        case ScenarioKind::Sweep:
            s.duration_s = s.security.n_pulses / s.source.rep_rate_hz;
            break;
        case ScenarioKind::KeyRate:
            break;
    }
    s.security.rep_rate_hz = s.source.rep_rate_hz;
    return s;
}

Scenario Scenario::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    check_keys(j, "config",
               {"kind", "mode", "seed", "duration_s", "window_s", "output_dir", "tally_file",
                "distances_km", "use_reference_presets", "use_tally_source", "settings",
                "source", "channel",
                "detector", "feedback", "security"});
    const std::string kind_name = get_str(j, "config", "kind", "");
    if (kind_name.empty()) fail("config", "missing required key 'kind'");
    const auto kind = scenario_kind_from(kind_name);
    if (!kind) fail("config", "unknown kind '" + kind_name + "'");

    Scenario s = defaults_for(*kind);
    if (j.contains("mode")) {
        const auto mode = sim_mode_from(get_str(j, "config", "mode", ""));
        if (!mode) fail("config", "mode must be 'expect' or 'mc'");
        s.mode = *mode;
    }
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
            fail("config", "'seed' must be a non-negative integer");
        const auto v = j.at("seed").get<std::int64_t>();
        if (v < 0) fail("config", "'seed' must be a non-negative integer");
        s.seed = static_cast<std::uint64_t>(v);
    } else if (s.mode == SimMode::MonteCarlo) {
        fail("config", "'seed' is required for Monte Carlo scenarios");
    }
    s.duration_s = get_num(j, "config", "duration_s", s.duration_s);
    s.window_s = get_num(j, "config", "window_s", s.window_s);
    s.output_dir = get_str(j, "config", "output_dir", s.output_dir);
    s.tally_file = get_str(j, "config", "tally_file", s.tally_file);
    s.use_reference_presets =
        get_bool(j, "config", "use_reference_presets", s.use_reference_presets);
    s.use_tally_source = get_bool(j, "config", "use_tally_source", s.use_tally_source);
    if (j.contains("distances_km")) {
        if (!j.at("distances_km").is_array()) fail("config", "'distances_km' must be an array");
        s.distances_km.clear();
        for (const auto& d : j.at("distances_km")) {
            if (!d.is_number()) fail("config", "'distances_km' entries must be numbers");
            s.distances_km.push_back(d.get<double>());
        }
    }
    if (j.contains("settings")) {
        const auto& t = j.at("settings");
        check_keys(t, "settings", {"theta1", "theta2", "theta3", "theta4"});
        s.settings.theta1 = get_num(t, "settings", "theta1", s.settings.theta1);
        s.settings.theta2 = get_num(t, "settings", "theta2", s.settings.theta2);
        s.settings.theta3 = get_num(t, "settings", "theta3", s.settings.theta3);
        s.settings.theta4 = get_num(t, "settings", "theta4", s.settings.theta4);
    }
    if (j.contains("source")) read_source(j.at("source"), s.source);
    if (j.contains("channel")) read_channel(j.at("channel"), s.channel);
    if (j.contains("detector")) read_detector(j.at("detector"), s.detector);
    if (j.contains("feedback")) read_feedback(j.at("feedback"), s.feedback);
    if (j.contains("security")) read_security(j.at("security"), s.security);
    s.security.rep_rate_hz = s.source.rep_rate_hz;
    s.validate();
    return s;
}

Scenario Scenario::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string Scenario::to_json_text() const {
    json j;
    j["kind"] = to_string(kind);
    j["mode"] = to_string(mode);
    j["seed"] = seed;
    j["duration_s"] = duration_s;
    j["window_s"] = window_s;
    j["output_dir"] = output_dir;
    j["tally_file"] = tally_file;
    j["distances_km"] = distances_km;
    j["use_reference_presets"] = use_reference_presets;
    j["use_tally_source"] = use_tally_source;
    j["settings"] = settings_json(settings);
    j["source"] = json{{"rep_rate_hz", source.rep_rate_hz}, {"mu", source.mu},
                       {"nu", source.nu}, {"p_mu", source.p_mu}, {"p_nu", source.p_nu},
                       {"p_z", source.p_z}, {"p_x", source.p_x},
                       {"intrinsic_error", source.intrinsic_error}};
    j["channel"] = json{{"length_km", channel.length_km},
                        {"atten_db_per_km", channel.atten_db_per_km},
                        {"extra_loss_db", channel.extra_loss_db},
                        {"fixed_loss_db", channel.fixed_loss_db},
                        {"drift_schedule", drift_schedule_json(channel.drift_schedule)},
                        {"scrambler", json{{"enabled", channel.scrambler.enabled},
                                           {"min_interval_s", channel.scrambler.min_interval_s},
                                           {"max_interval_s", channel.scrambler.max_interval_s},
                                           {"varphi_min", channel.scrambler.varphi_min},
                                           {"varphi_max", channel.scrambler.varphi_max},
                                           {"phi_min", channel.scrambler.phi_min},
                                           {"phi_max", channel.scrambler.phi_max}}}};
    j["detector"] = json{{"efficiency", detector.efficiency},
                         {"dark_rate_hz", detector.dark_rate_hz},
                         {"chip_loss_db", detector.chip_loss_db},
                         {"bob_basis_prob_z", detector.bob_basis_prob_z},
                         {"dark_gate_duty", detector.dark_gate_duty}};
    json sched = json::array();
    for (const auto& e : feedback.schedule)
        sched.push_back(json{{"qber_at_least", e.qber_at_least},
                             {"dither_v", e.dither_v},
                             {"step_gain", e.step_gain}});
    j["feedback"] = json{{"e_z_threshold", feedback.e_z_threshold},
                         {"e_x_threshold", feedback.e_x_threshold},
                         {"schedule", sched},
                         {"max_cycles", feedback.max_cycles},
                         {"max_evaluations", feedback.max_evaluations},
                         {"window_s", feedback.window_s},
                         {"settle_delay_s", feedback.settle_delay_s},
                         {"v_min", feedback.v_min},
                         {"v_max", feedback.v_max},
                         {"calibration",
                          json{{"v_pi", feedback.calibration.v_pi},
                               {"law", feedback.calibration.law == PhaseLaw::Quadratic
                                           ? "quadratic"
                                           : "linear"},
                               {"theta0", feedback.calibration.theta0}}}};
    j["security"] = json{{"eps_sec", security.eps_sec},
                         {"eps_cor", security.eps_cor},
                         {"f_ec", security.f_ec},
                         {"n_pulses", security.n_pulses},
                         {"budget", json{{"bound_failures", security.budget.bound_failures}}}};
    return j.dump(2) + "\n";
}

std::uint64_t Scenario::config_hash() const { return fnv1a(to_json_text()); }

void Scenario::validate() const {
    source.validate();
    channel.validate();
    detector.validate();
    feedback.validate();
    security.validate();
    if (!(duration_s > 0.0)) throw std::domain_error("scenario: duration must be > 0");
    if (!(window_s > 0.0)) throw std::domain_error("scenario: window must be > 0");
    if (kind == ScenarioKind::Sweep && distances_km.empty())
        throw std::domain_error("scenario: sweep needs at least one distance");
}

TallyBlock load_tally_csv(const std::string& path, std::optional<SourceConfig>* embedded_source) {
    std::ifstream in(path);
    if (!in) throw ParseError("tally file: cannot open '" + path + "'");
    TallyBlock t;
    bool seen[2][2] = {{false, false}, {false, false}};
    bool header_seen = false;
    double duration = -1.0;
    std::string line;
    int lineno = 0;
    if (embedded_source) embedded_source->reset();
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("# source ", 0) == 0 && embedded_source) {
            SourceConfig src;
            const int got = std::sscanf(
                line.c_str(),
                "# source rep_rate_hz=%lf mu=%lf nu=%lf p_mu=%lf p_nu=%lf p_z=%lf p_x=%lf "
                "intrinsic_error=%lf",
                &src.rep_rate_hz, &src.mu, &src.nu, &src.p_mu, &src.p_nu, &src.p_z, &src.p_x,
                &src.intrinsic_error);
            if (got != 8) fail(path + ":" + std::to_string(lineno), "malformed '# source' line");
            *embedded_source = src;
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        const std::string at = path + ":" + std::to_string(lineno);
        if (!header_seen) {
            if (fields != std::vector<std::string>{"basis", "intensity", "n", "m", "duration_s"})
                fail(at, "expected header 'basis,intensity,n,m,duration_s'");
            header_seen = true;
            continue;
        }
        if (fields.size() != 5) fail(at, "expected 5 fields, got " + std::to_string(fields.size()));
        int b;
        if (fields[0] == "Z") b = 0;
        else if (fields[0] == "X") b = 1;
        else fail(at, "field 1: basis must be 'Z' or 'X'");
        int k;
        if (fields[1] == "mu") k = 0;
        else if (fields[1] == "nu") k = 1;
        else fail(at, "field 2: intensity must be 'mu' or 'nu'");
        double vals[3];
        for (int f = 0; f < 3; ++f) {
            const std::string& tok = fields[static_cast<std::size_t>(f) + 2];
            char* end = nullptr;
            vals[f] = std::strtod(tok.c_str(), &end);
            if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(vals[f]))
                fail(at, "field " + std::to_string(f + 3) + ": bad number '" + tok + "'");
        }
        if (vals[0] < 0.0 || vals[1] < 0.0) fail(at, "counts must be >= 0");
        if (vals[1] > vals[0]) fail(at, "error count m exceeds count n");
        if (vals[2] <= 0.0) fail(at, "duration_s must be > 0");
        if (seen[b][k]) fail(at, "duplicate basis/intensity row");
        if (duration >= 0.0 && std::abs(duration - vals[2]) > 1e-9)
            fail(at, "duration_s differs between rows");
        duration = vals[2];
        seen[b][k] = true;
        t.n[b][k] = vals[0];
        t.m[b][k] = vals[1];
    }
    if (!header_seen) fail(path, "empty tally file");
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 2; ++k)
            if (!seen[b][k]) fail(path, "missing a basis/intensity row");
    t.duration_s = duration;
    return t;
}

void save_tally_csv(const std::string& path, const TallyBlock& tally,
                    const std::string& meta_comment, const SourceConfig* source) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << meta_comment;
    // %.17g keeps the doubles bit-exact across a save/load round trip
    const auto exact = [](double v) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    if (source)
        out << "# source rep_rate_hz=" << exact(source->rep_rate_hz) << " mu="
            << exact(source->mu) << " nu=" << exact(source->nu) << " p_mu="
            << exact(source->p_mu) << " p_nu=" << exact(source->p_nu) << " p_z="
            << exact(source->p_z) << " p_x=" << exact(source->p_x) << " intrinsic_error="
            << exact(source->intrinsic_error) << "\n";
    out << "basis,intensity,n,m,duration_s\n";
    const char* bn[2] = {"Z", "X"};
    const char* kn[2] = {"mu", "nu"};
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 2; ++k)
            out << bn[b] << ',' << kn[k] << ',' << exact(tally.n[b][k]) << ','
                << exact(tally.m[b][k]) << ',' << exact(tally.duration_s) << '\n';
}

namespace {

// Collects output files under the scenario's directory with a common
// metadata block.
class Outputs {
  public:
    Outputs(const Scenario& scn, RunReport& report) : report_(report) {
        dir_ = scn.output_dir.empty() ? fs::path(".") : fs::path(scn.output_dir);
        fs::create_directories(dir_);
        meta_ = std::string("# polarsim ") + POLARSIM_VERSION_STRING + "\n# config_hash=" +
                hex16(scn.config_hash()) + "\n# seed=" + std::to_string(scn.seed) + "\n";
        meta_json_ = json{{"tool", "polarsim"},
                          {"version", POLARSIM_VERSION_STRING},
                          {"config_hash", hex16(scn.config_hash())},
                          {"seed", scn.seed}};
    }

    const std::string& meta_comment() const { return meta_; }
    const json& meta_json() const { return meta_json_; }

    std::string path_of(const std::string& name) const { return (dir_ / name).string(); }

    void write_text(const std::string& name, const std::string& body) {
        const std::string p = path_of(name);
        std::ofstream out(p, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + p + "'");
        out << body;
        report_.files_written.push_back(p);
    }

    void write_csv(const std::string& name, const std::string& header,
                   const std::vector<std::string>& rows) {
        std::string body = meta_ + header + "\n";
        for (const auto& r : rows) body += r + "\n";
        write_text(name, body);
    }

    void write_json(const std::string& name, json j) {
        j["meta"] = meta_json_;
        write_text(name, j.dump(2) + "\n");
    }

    void note_file(const std::string& p) { report_.files_written.push_back(p); }

  private:
    fs::path dir_;
    std::string meta_;
    json meta_json_;
    RunReport& report_;
};

const char* kStateNames[4] = {"H", "V", "D", "A"};

RunReport run_povm_table(const Scenario& scn) {
    RunReport report;
    Outputs out(scn, report);
    const DriftParams drift = scn.channel.drift_at(0.0);

    json table = json::array();
    std::vector<std::string> rows;
    bool nominal_inputs = drift.varphi == 0.0 && drift.phi == 0.0;
    const PhaseSettings nominal = PhaseSettings::nominal();
    const bool nominal_settings = scn.settings.theta1 == nominal.theta1 &&
                                  scn.settings.theta2 == nominal.theta2 &&
                                  scn.settings.theta3 == nominal.theta3 &&
                                  scn.settings.theta4 == nominal.theta4;
    double max_err = 0.0;
    for (int i = 0; i < 4; ++i) {
        const PathState st = drifted_bb84(static_cast<Bb84State>(i), drift);
        const PortProbabilities p = detection_probabilities(st, scn.settings);
        table.push_back(json{{"input", kStateNames[i]},
                             {"p_h", p.p[0]},
                             {"p_v", p.p[1]},
                             {"p_d", p.p[2]},
                             {"p_a", p.p[3]}});
        rows.push_back(std::string(kStateNames[i]) + "," + fmt_g(p.p[0]) + "," + fmt_g(p.p[1]) +
                       "," + fmt_g(p.p[2]) + "," + fmt_g(p.p[3]));
        if (nominal_inputs && nominal_settings)
            for (int q = 0; q < 4; ++q)
                max_err = std::max(max_err,
                                   std::abs(p.p[static_cast<std::size_t>(q)] - kNominalTable[i][q]));
    }
    out.write_csv("povm_table.csv", "input,p_h,p_v,p_d,p_a", rows);

    json rep{{"kind", "povm-table"}, {"table", table}};
    std::string check = "n/a";
    if (nominal_inputs && nominal_settings) {
        check = max_err <= 1e-12 ? "pass" : "fail";
        rep["nominal_check"] = check;
        rep["nominal_max_error"] = max_err;
    }
    out.write_json("povm_report.json", rep);
    report.report_json = rep.dump(2) + "\n";
    report.summary = "povm-table: 4x4 port probabilities written (nominal check: " + check + ")\n";
    report.exit_code = check == "fail" ? 2 : 0;
    return report;
}

RunReport run_stability(const Scenario& scn) {
    RunReport report;
    Outputs out(scn, report);
    const Rng master(scn.seed);
    const auto windows = static_cast<std::uint64_t>(std::ceil(scn.duration_s / scn.window_s));

    std::vector<std::string> rows;
    std::vector<double> qbers;
    double mean_z = 0.0, mean_x = 0.0;
    std::uint64_t with_data = 0;
    for (std::uint64_t w = 0; w < windows; ++w) {
        const double t0 = static_cast<double>(w) * scn.window_s;
        const double dt = std::min(scn.window_s, scn.duration_s - t0);
        if (!(dt > 0.0)) break;
        ChannelConfig ch = scn.channel;  // drift is whatever the schedule says at t0
        ch.drift_schedule = {DriftSegment{0.0, scn.channel.drift_at(t0)}};
        const TallyBlock tally =
            scn.mode == SimMode::MonteCarlo
                ? sample_tally(scn.source, ch, scn.detector, scn.settings, dt,
                               master.derive(w).next_u64())
                : expected_tally(scn.source, ch, scn.detector, scn.settings, dt);
        const auto ez = qber(tally, Basis::Z);
        const auto ex = qber(tally, Basis::X);
        const double n_all = tally.n_total(Basis::Z) + tally.n_total(Basis::X);
        const double m_all = tally.m_total(Basis::Z) + tally.m_total(Basis::X);
        const double e_tot = n_all > 0.0 ? m_all / n_all : 0.0;
        rows.push_back(fmt_g(t0) + "," + fmt_g(tally.n_total(Basis::Z)) + "," +
                       fmt_g(tally.m_total(Basis::Z)) + "," + fmt_g(tally.n_total(Basis::X)) +
                       "," + fmt_g(tally.m_total(Basis::X)) + "," + fmt_g(ez.value_or(0.0)) +
                       "," + fmt_g(ex.value_or(0.0)) + "," + fmt_g(e_tot));
        if (n_all > 0.0) {
            qbers.push_back(e_tot);
            mean_z += ez.value_or(0.0);
            mean_x += ex.value_or(0.0);
            ++with_data;
        }
    }
    out.write_csv("stability_series.csv", "t_s,n_z,m_z,n_x,m_x,qber_z,qber_x,qber_total", rows);

    double mean = 0.0, stderr_mean = 0.0;
    if (!qbers.empty()) {
        for (const double q : qbers) mean += q;
        mean /= static_cast<double>(qbers.size());
        double var = 0.0;
        for (const double q : qbers) var += (q - mean) * (q - mean);
        if (qbers.size() > 1) {
            var /= static_cast<double>(qbers.size() - 1);
            stderr_mean = std::sqrt(var / static_cast<double>(qbers.size()));
        }
    }
    json rep{{"kind", "stability"},
             {"windows", windows},
             {"windows_with_data", with_data},
             {"mean_qber", mean},
             {"stderr_qber", stderr_mean},
             {"mean_qber_z", with_data ? mean_z / static_cast<double>(with_data) : 0.0},
             {"mean_qber_x", with_data ? mean_x / static_cast<double>(with_data) : 0.0}};
    out.write_json("stability_report.json", rep);
    report.report_json = rep.dump(2) + "\n";
    report.summary = "stability: mean QBER " + fmt_g(mean * 100.0) + "% +- " +
                     fmt_g(stderr_mean * 100.0) + "% over " + std::to_string(windows) +
                     " windows\n";
    return report;
}

RunReport run_scramble(const Scenario& scn) {
    RunReport report;
    Outputs out(scn, report);
    const Rng master(scn.seed);
    Rng event_rng = master.derive(0);

    double t = 0.0;
    std::uint64_t window_index = 0;
    DriftParams drift = scn.channel.drift_at(0.0);

    FeedbackConfig fb = scn.feedback;
    fb.window_s = scn.window_s;
    ControllerState ctrl;
    ctrl.voltages = nominal_voltages(fb);

    std::vector<std::string> series;
    std::vector<std::string> trace_rows;
    std::size_t trace_flushed = 0;
    json events = json::array();
    bool all_converged = true;

    const auto measure_raw = [&](const VoltageState& vs) -> std::optional<QberSample> {
        const PhaseSettings st = [&] {
            ControllerState tmp;
            tmp.voltages = vs;
            return tmp.settings(fb.calibration);
        }();
        ChannelConfig ch = scn.channel;
        ch.drift_schedule = {DriftSegment{0.0, drift}};
        const ChipTrim trim{vs.voa_z_db, vs.voa_x_db};
        const TallyBlock tally =
            scn.mode == SimMode::MonteCarlo
                ? sample_tally(scn.source, ch, scn.detector, st, scn.window_s,
                               master.derive(1'000'000 + window_index).next_u64(), trim)
                : expected_tally(scn.source, ch, scn.detector, st, scn.window_s, trim);
        ++window_index;
        const auto ez = qber(tally, Basis::Z);
        const auto ex = qber(tally, Basis::X);
        if (!ez || !ex) return std::nullopt;
        return QberSample{*ez, *ex};
    };

    const auto push_series = [&](double when, const std::optional<QberSample>& q) {
        if (q) {
            const double e_tot = 0.5 * (q->e_z + q->e_x);
            series.push_back(fmt_g(when) + "," + fmt_g(q->e_z) + "," + fmt_g(q->e_x) + "," +
                             fmt_g(e_tot));
        } else {
            series.push_back(fmt_g(when) + ",,,");
        }
    };

    const auto flush_trace = [&] {
        for (; trace_flushed < ctrl.trace.size(); ++trace_flushed) {
            const auto& e = ctrl.trace[trace_flushed];
            trace_rows.push_back(std::to_string(e.cycle) + "," + fmt_g(e.t_s) + "," +
                                 fmt_g(e.v[0]) + "," + fmt_g(e.v[1]) + "," + fmt_g(e.v[2]) + "," +
                                 fmt_g(e.v[3]) + "," + fmt_g(e.e_z) + "," + fmt_g(e.e_x) + "," +
                                 (e.converged ? "1" : "0"));
        }
    };

    // Feedback-path measure: stamps the series with the controller clock.
    const QberMeasure measure_fb = [&](const VoltageState& vs) {
        const auto q = measure_raw(vs);
        push_series(ctrl.elapsed_s + scn.window_s, q);
        return q;
    };

    double next_event_t = -1.0;
    DriftParams next_drift;
    if (const auto ev = next_scramble(scn.channel.scrambler, event_rng)) {
        next_event_t = ev->wait_s;
        next_drift = ev->drift;
    }

    const auto run_recovery = [&](const char* why) {
        const double t_start = t;
        ctrl.elapsed_s = t;
        ctrl.evaluations = 0;
        const int cycle0 = ctrl.cycle;
        const FeedbackResult res = run_feedback(measure_fb, ctrl, fb);
        t = ctrl.elapsed_s;
        flush_trace();
        events.push_back(json{{"t_s", t_start},
                              {"cause", why},
                              {"varphi_rad", drift.varphi},
                              {"phi_rad", drift.phi},
                              {"converged", res.converged},
                              {"cycles", ctrl.cycle - cycle0},
                              {"evaluations", res.evaluations},
                              {"recovery_s", t - t_start},
                              {"final_e_z", res.e_z},
                              {"final_e_x", res.e_x}});
        if (!res.converged) all_converged = false;
        return res;
    };

    while (t < scn.duration_s) {
        if (next_event_t >= 0.0 && t >= next_event_t) {
            drift = next_drift;
            ctrl.last_e_z = ctrl.last_e_x = -1.0;  // force re-evaluation under the new drift
            run_recovery("scramble");
            if (const auto ev = next_scramble(scn.channel.scrambler, event_rng)) {
                next_event_t = t + ev->wait_s;
                next_drift = ev->drift;
            } else {
                next_event_t = -1.0;
            }
            continue;
        }
        const auto q = measure_raw(ctrl.voltages);
        t += scn.window_s;
        push_series(t, q);
        if (q) {
            ctrl.last_e_z = q->e_z;
            ctrl.last_e_x = q->e_x;
            if (q->e_z > fb.e_z_threshold || q->e_x > fb.e_x_threshold) run_recovery("threshold");
        }
    }
    flush_trace();

    out.write_csv("qber_series.csv", "t_s,e_z,e_x,e_total", series);
    out.write_csv("feedback_trace.csv",
                  "cycle,t_seconds,V1,V2,V3,V4,E_Z,E_X,converged_flag", trace_rows);

    double mean_recovered = 0.0;
    std::uint64_t recovered = 0;
    for (const auto& e : events)
        if (e.at("converged").get<bool>()) {
            mean_recovered += 0.5 * (e.at("final_e_z").get<double>() +
                                     e.at("final_e_x").get<double>());
            ++recovered;
        }
    if (recovered > 0) mean_recovered /= static_cast<double>(recovered);

    json rep{{"kind", "scramble"},
             {"events", events},
             {"event_count", events.size()},
             {"recovered_count", recovered},
             {"all_converged", all_converged},
             {"mean_recovered_qber", mean_recovered}};
    out.write_json("scramble_report.json", rep);
    report.report_json = rep.dump(2) + "\n";
    report.summary = "scramble: " + std::to_string(events.size()) + " events, " +
                     std::to_string(recovered) + " recovered, mean recovered QBER " +
                     fmt_g(mean_recovered * 100.0) + "%\n";
    report.exit_code = all_converged ? 0 : 1;
    return report;
}

RunReport run_sweep(const Scenario& scn) {
    RunReport report;
    Outputs out(scn, report);
    const Rng master(scn.seed);

    std::vector<std::string> rows;
    json dist_reports = json::array();
    std::uint64_t idx = 0;
    for (const double km : scn.distances_km) {
        Scenario sub = scn;
        if (const LinkPreset* p = scn.use_reference_presets ? reference_link(km) : nullptr) {
            sub.channel.fixed_loss_db = p->channel_db;
            sub.source.mu = p->mu;
            sub.source.nu = p->nu;
            sub.source.p_mu = p->p_mu;
            sub.source.p_nu = p->p_nu;
            sub.source.p_z = p->p_z;
            sub.source.p_x = p->p_x;
        } else {
            sub.channel.fixed_loss_db = -1.0;
        }
        sub.channel.length_km = km;
        SecurityParams sec = sub.security;
        sec.rep_rate_hz = sub.source.rep_rate_hz;
        const double duration = sec.n_pulses / sub.source.rep_rate_hz;

        const TallyBlock tally =
            scn.mode == SimMode::MonteCarlo
                ? sample_tally(sub.source, sub.channel, sub.detector, sub.settings, duration,
                               master.derive(idx).next_u64())
                : expected_tally(sub.source, sub.channel, sub.detector, sub.settings, duration);
        const DecoyBounds bounds = decoy_bounds(tally, sub.source, sec);
        const double lam = lambda_ec(tally, sec);
        const KeyRateReport kr = secret_key_length(bounds, lam, sec);
        const double eta = channel_transmittance(sub.channel, sub.detector);
        const double qz = qber(tally, Basis::Z).value_or(0.0);

        const std::string tally_name = "tally_" + fmt_g(km) + "km.csv";
        save_tally_csv(out.path_of(tally_name), tally, out.meta_comment(), &sub.source);
        out.note_file(out.path_of(tally_name));

        rows.push_back(fmt_g(km) + "," + fmt_g(sub.channel.fiber_loss_db()) + "," + fmt_g(eta) +
                       "," + fmt_g(tally.n[0][0]) + "," + fmt_g(tally.n[0][1]) + "," +
                       fmt_g(tally.n[1][0]) + "," + fmt_g(tally.n[1][1]) + "," +
                       fmt_g(tally.m[0][0]) + "," + fmt_g(tally.m[0][1]) + "," +
                       fmt_g(tally.m[1][0]) + "," + fmt_g(tally.m[1][1]) + "," + fmt_g(qz) + "," +
                       fmt_g(kr.s_z0_l) + "," + fmt_g(kr.s_z1_l) + "," + fmt_g(kr.phi_z_u) + "," +
                       fmt_g(kr.lambda_ec_bits) + "," + fmt_g(kr.secret_bits) + "," +
                       fmt_g(kr.skr_bps));
        dist_reports.push_back(json{{"distance_km", km},
                                    {"channel_db", sub.channel.fiber_loss_db()},
                                    {"eta", eta},
                                    {"qber_z", qz},
                                    {"s_z0_l", kr.s_z0_l},
                                    {"s_z1_l", kr.s_z1_l},
                                    {"phi_z_u", kr.phi_z_u},
                                    {"lambda_ec", kr.lambda_ec_bits},
                                    {"secret_bits", kr.secret_bits},
                                    {"skr_bps", kr.skr_bps},
                                    {"floored", kr.floored},
                                    {"tally_file", tally_name}});
        ++idx;
    }
    out.write_csv("sweep_keyrates.csv",
                  "distance_km,channel_db,eta,n_z_mu,n_z_nu,n_x_mu,n_x_nu,m_z_mu,m_z_nu,m_x_mu,"
                  "m_x_nu,qber_z,s_z0_l,s_z1_l,phi_z_u,lambda_ec,secret_bits,skr_bps",
                  rows);
    json rep{{"kind", "sweep"}, {"distances", dist_reports}};
    out.write_json("sweep_report.json", rep);
    report.report_json = rep.dump(2) + "\n";
    std::string sum = "sweep:";
    for (const auto& d : dist_reports)
        sum += " " + fmt_g(d.at("distance_km").get<double>()) + "km=" +
               fmt_g(d.at("skr_bps").get<double>()) + "bps";
    report.summary = sum + "\n";
    return report;
}

RunReport run_keyrate(const Scenario& scn) {
    RunReport report;
    Outputs out(scn, report);
    if (scn.tally_file.empty()) throw ParseError("keyrate: no tally file given");
    std::optional<SourceConfig> embedded;
    const TallyBlock tally = load_tally_csv(scn.tally_file, &embedded);

    const bool from_file = scn.use_tally_source && embedded.has_value();
    const SourceConfig& src = from_file ? *embedded : scn.source;
    SecurityParams sec = scn.security;
    sec.rep_rate_hz = src.rep_rate_hz;
    const DecoyBounds bounds = decoy_bounds(tally, src, sec);
    const double lam = lambda_ec(tally, sec);
    const KeyRateReport kr = secret_key_length(bounds, lam, sec);
    const double qz = qber(tally, Basis::Z).value_or(0.0);
    const double qx = qber(tally, Basis::X).value_or(0.0);

    json rep{{"kind", "keyrate"},
             {"tally_file", scn.tally_file},
             {"source_from", from_file ? "tally-file" : "config"},
             {"source", json{{"mu", src.mu},
                             {"nu", src.nu},
                             {"p_mu", src.p_mu},
                             {"p_nu", src.p_nu},
                             {"p_z", src.p_z},
                             {"p_x", src.p_x}}},
             {"duration_s", tally.duration_s},
             {"qber_z", qz},
             {"qber_x", qx},
             {"s_z0_l", kr.s_z0_l},
             {"s_z1_l", kr.s_z1_l},
             {"s_x1_l", bounds.s_x1_l},
             {"v_x1_u", bounds.v_x1_u},
             {"phi_z_u", kr.phi_z_u},
             {"lambda_ec", kr.lambda_ec_bits},
             {"secret_bits", kr.secret_bits},
             {"skr_bps", kr.skr_bps},
             {"floored", kr.floored}};
    out.write_json("keyrate_report.json", rep);
    report.report_json = rep.dump(2) + "\n";
    report.summary = "keyrate: l=" + fmt_g(kr.secret_bits) + " bits, SKR=" + fmt_g(kr.skr_bps) +
                     " bps (QBER_Z " + fmt_g(qz) + ")\n";
    return report;
}

}  // namespace

RunReport run_scenario(const Scenario& scn) {
    scn.validate();
    switch (scn.kind) {
        case ScenarioKind::PovmTable: return run_povm_table(scn);
        case ScenarioKind::Stability: return run_stability(scn);
        case ScenarioKind::Scramble: return run_scramble(scn);
        case ScenarioKind::Sweep: return run_sweep(scn);
        case ScenarioKind::KeyRate: return run_keyrate(scn);
    }
    throw std::logic_error("run_scenario: bad kind");
}

}  // namespace polarsim
