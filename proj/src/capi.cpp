#include "polarsim.h"

#include <cstring>
#include <exception>
#include <string>

#include "json.hpp"
#include "polarsim/scenario.hpp"
#include "polarsim/version.hpp"

using namespace polarsim;

struct polarsim_scenario {
    Scenario impl;
};

struct polarsim_report {
    RunReport impl;
};

namespace {

thread_local std::string g_last_error;

polarsim_status set_error(polarsim_status status, const std::string& what) {
    g_last_error = what;
    return status;
}

template <typename Fn>
polarsim_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ParseError& e) {
        return set_error(POLARSIM_ERR_PARSE, e.what());
    } catch (const std::domain_error& e) {
        return set_error(POLARSIM_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::invalid_argument& e) {
        return set_error(POLARSIM_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::ios_base::failure& e) {
        return set_error(POLARSIM_ERR_IO, e.what());
    } catch (const std::exception& e) {
        const std::string what = e.what();
        if (what.find("cannot write") != std::string::npos ||
            what.find("cannot open") != std::string::npos)
            return set_error(POLARSIM_ERR_IO, what);
        return set_error(POLARSIM_ERR_INTERNAL, what);
    } catch (...) {
        return set_error(POLARSIM_ERR_INTERNAL, "unknown error");
    }
}

polarsim_status require(bool ok, const char* what) {
    return ok ? POLARSIM_OK : set_error(POLARSIM_ERR_INVALID_ARGUMENT, what);
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

}  // namespace

const char* polarsim_version(void) { return POLARSIM_VERSION_STRING; }

const char* polarsim_status_name(polarsim_status status) {
    switch (status) {
        case POLARSIM_OK: return "ok";
        case POLARSIM_ERR_INVALID_ARGUMENT: return "invalid argument";
        case POLARSIM_ERR_PARSE: return "parse error";
        case POLARSIM_ERR_NO_DATA: return "no data";
        case POLARSIM_ERR_IO: return "io error";
        case POLARSIM_ERR_INTERNAL: return "internal error";
    }
    return "unknown";
}

const char* polarsim_last_error(void) { return g_last_error.c_str(); }

void polarsim_string_free(char* text) { delete[] text; }

polarsim_status polarsim_scenario_create(const char* kind, polarsim_scenario** out) {
    if (auto st = require(kind && out, "null argument")) return st;
    return guarded([&] {
        const auto k = scenario_kind_from(kind);
        if (!k) return set_error(POLARSIM_ERR_INVALID_ARGUMENT, std::string("unknown kind '") + kind + "'");
        *out = new polarsim_scenario{Scenario::defaults_for(*k)};
        return POLARSIM_OK;
    });
}

polarsim_status polarsim_scenario_from_json(const char* json_text, polarsim_scenario** out) {
    if (auto st = require(json_text && out, "null argument")) return st;
    return guarded([&] {
        *out = new polarsim_scenario{Scenario::from_json_text(json_text)};
        return POLARSIM_OK;
    });
}

polarsim_status polarsim_scenario_from_file(const char* path, polarsim_scenario** out) {
    if (auto st = require(path && out, "null argument")) return st;
    return guarded([&] {
        *out = new polarsim_scenario{Scenario::from_file(path)};
        return POLARSIM_OK;
    });
}

void polarsim_scenario_destroy(polarsim_scenario* scenario) { delete scenario; }

polarsim_status polarsim_scenario_set_kind(polarsim_scenario* scenario, const char* kind) {
    if (auto st = require(scenario && kind, "null argument")) return st;
    const auto k = scenario_kind_from(kind);
    if (!k) return set_error(POLARSIM_ERR_INVALID_ARGUMENT, std::string("unknown kind '") + kind + "'");
    scenario->impl.kind = *k;
    return POLARSIM_OK;
}

polarsim_status polarsim_scenario_set_seed(polarsim_scenario* scenario, uint64_t seed) {
    if (auto st = require(scenario != nullptr, "null scenario")) return st;
    scenario->impl.seed = seed;
    return POLARSIM_OK;
}

polarsim_status polarsim_scenario_set_mode(polarsim_scenario* scenario, const char* mode) {
    if (auto st = require(scenario && mode, "null argument")) return st;
    const auto m = sim_mode_from(mode);
    if (!m) return set_error(POLARSIM_ERR_INVALID_ARGUMENT, "mode must be 'expect' or 'mc'");
    scenario->impl.mode = *m;
    return POLARSIM_OK;
}

polarsim_status polarsim_scenario_set_output_dir(polarsim_scenario* scenario, const char* dir) {
    if (auto st = require(scenario && dir, "null argument")) return st;
    scenario->impl.output_dir = dir;
    return POLARSIM_OK;
}

polarsim_status polarsim_scenario_set_tally_file(polarsim_scenario* scenario, const char* path) {
    if (auto st = require(scenario && path, "null argument")) return st;
    scenario->impl.tally_file = path;
    return POLARSIM_OK;
}

polarsim_status polarsim_scenario_set_distances(polarsim_scenario* scenario, const double* km,
                                                size_t count) {
    if (auto st = require(scenario && (km || count == 0), "null argument")) return st;
    scenario->impl.distances_km.assign(km, km + count);
    return POLARSIM_OK;
}

polarsim_status polarsim_scenario_to_json(const polarsim_scenario* scenario, char** out_json) {
    if (auto st = require(scenario && out_json, "null argument")) return st;
    return guarded([&] {
        *out_json = dup_string(scenario->impl.to_json_text());
        return POLARSIM_OK;
    });
}

polarsim_status polarsim_run(const polarsim_scenario* scenario, polarsim_report** out) {
    if (auto st = require(scenario && out, "null argument")) return st;
    return guarded([&] {
        *out = new polarsim_report{run_scenario(scenario->impl)};
        return POLARSIM_OK;
    });
}

void polarsim_report_destroy(polarsim_report* report) { delete report; }

const char* polarsim_report_summary(const polarsim_report* report) {
    return report ? report->impl.summary.c_str() : "";
}

const char* polarsim_report_json(const polarsim_report* report) {
    return report ? report->impl.report_json.c_str() : "";
}

int polarsim_report_exit_code(const polarsim_report* report) {
    return report ? report->impl.exit_code : 2;
}

size_t polarsim_report_file_count(const polarsim_report* report) {
    return report ? report->impl.files_written.size() : 0;
}

const char* polarsim_report_file(const polarsim_report* report, size_t index) {
    if (!report || index >= report->impl.files_written.size()) return nullptr;
    return report->impl.files_written[index].c_str();
}

polarsim_status polarsim_detection_probabilities(double alpha_re, double alpha_im, double beta_re,
                                                 double beta_im, const double theta[4],
                                                 double out_p[4]) {
    if (auto st = require(theta && out_p, "null argument")) return st;
    return guarded([&] {
        const PathState state = make_state(Complex{alpha_re, alpha_im}, Complex{beta_re, beta_im});
        const PhaseSettings s{theta[0], theta[1], theta[2], theta[3]};
        const PortProbabilities p = detection_probabilities(state, s);
        for (int i = 0; i < 4; ++i) out_p[i] = p.p[static_cast<std::size_t>(i)];
        return POLARSIM_OK;
    });
}

polarsim_status polarsim_solve_compensation(double varphi, double phi, double out_theta[4]) {
    if (auto st = require(out_theta != nullptr, "null argument")) return st;
    return guarded([&] {
        const PhaseSettings s = solve_compensation(DriftParams(varphi, phi));
        out_theta[0] = s.theta1;
        out_theta[1] = s.theta2;
        out_theta[2] = s.theta3;
        out_theta[3] = s.theta4;
        return POLARSIM_OK;
    });
}

polarsim_status polarsim_binary_entropy(double x, double* out) {
    if (auto st = require(out != nullptr, "null argument")) return st;
    return guarded([&] {
        *out = binary_entropy(x);
        return POLARSIM_OK;
    });
}

polarsim_status polarsim_key_rate_from_tally(const char* tally_csv_path,
                                             const char* scenario_json, char** out_report_json) {
    if (auto st = require(tally_csv_path && out_report_json, "null argument")) return st;
    return guarded([&] {
        Scenario scn = Scenario::defaults_for(ScenarioKind::KeyRate);
        if (scenario_json && *scenario_json && std::strcmp(scenario_json, "{}") != 0) {
            nlohmann::json j = nlohmann::json::parse(scenario_json, nullptr, false);
            if (j.is_discarded())
                return set_error(POLARSIM_ERR_PARSE, "scenario_json: not valid JSON");
            if (!j.contains("kind")) j["kind"] = "keyrate";
            scn = Scenario::from_json_text(j.dump());
        }
        scn.tally_file = tally_csv_path;

        std::optional<SourceConfig> embedded;
        const TallyBlock tally = load_tally_csv(scn.tally_file, &embedded);
        const SourceConfig& src =
            scn.use_tally_source && embedded ? *embedded : scn.source;
        SecurityParams sec = scn.security;
        sec.rep_rate_hz = src.rep_rate_hz;
        const DecoyBounds bounds = decoy_bounds(tally, src, sec);
        const KeyRateReport kr = secret_key_length(bounds, lambda_ec(tally, sec), sec);
        nlohmann::json rep{{"qber_z", qber(tally, Basis::Z).value_or(0.0)},
                           {"qber_x", qber(tally, Basis::X).value_or(0.0)},
                           {"s_z0_l", kr.s_z0_l},
                           {"s_z1_l", kr.s_z1_l},
                           {"phi_z_u", kr.phi_z_u},
                           {"lambda_ec", kr.lambda_ec_bits},
                           {"secret_bits", kr.secret_bits},
                           {"skr_bps", kr.skr_bps},
                           {"floored", kr.floored}};
        *out_report_json = dup_string(rep.dump(2) + "\n");
        return POLARSIM_OK;
    });
}
