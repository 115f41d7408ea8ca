// Command-line front end over the polarsim C API.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "polarsim.h"

namespace {

struct CommonOpts {
    std::string config;
    std::string out_dir;
    std::string mode;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool print_config = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config, "Scenario JSON file");
    cmd->add_option("--out", opts.out_dir, "Output directory");
    cmd->add_option("--mode", opts.mode, "Simulation mode: expect | mc")
        ->check(CLI::IsMember({"expect", "mc"}));
    cmd->add_option("--seed", opts.seed, "Master RNG seed")->trigger_on_parse()
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    cmd->add_flag("--print-config", opts.print_config,
                  "Print the resolved scenario JSON before running");
}

int fail(polarsim_status status) {
    std::fprintf(stderr, "polarsim: %s: %s\n", polarsim_status_name(status),
                 polarsim_last_error());
    // Parse and argument problems map to the invalid-input exit code.
    return 2;
}

int run(const char* kind, const CommonOpts& opts,
        const std::vector<double>* distances, const std::string* tally) {
    polarsim_scenario* scn = nullptr;
    polarsim_status st = opts.config.empty()
                             ? polarsim_scenario_create(kind, &scn)
                             : polarsim_scenario_from_file(opts.config.c_str(), &scn);
    if (st != POLARSIM_OK) return fail(st);

    if ((st = polarsim_scenario_set_kind(scn, kind)) != POLARSIM_OK) return fail(st);
    if (opts.seed_set && (st = polarsim_scenario_set_seed(scn, opts.seed)) != POLARSIM_OK)
        return fail(st);
    if (!opts.mode.empty() &&
        (st = polarsim_scenario_set_mode(scn, opts.mode.c_str())) != POLARSIM_OK)
        return fail(st);
    if (!opts.out_dir.empty() &&
        (st = polarsim_scenario_set_output_dir(scn, opts.out_dir.c_str())) != POLARSIM_OK)
        return fail(st);
    if (distances && !distances->empty() &&
        (st = polarsim_scenario_set_distances(scn, distances->data(), distances->size())) !=
            POLARSIM_OK)
        return fail(st);
    if (tally && !tally->empty() &&
        (st = polarsim_scenario_set_tally_file(scn, tally->c_str())) != POLARSIM_OK)
        return fail(st);

    if (opts.print_config) {
        char* text = nullptr;
        if ((st = polarsim_scenario_to_json(scn, &text)) != POLARSIM_OK) return fail(st);
        std::fputs(text, stdout);
        polarsim_string_free(text);
    }

    polarsim_report* report = nullptr;
    st = polarsim_run(scn, &report);
    polarsim_scenario_destroy(scn);
    if (st != POLARSIM_OK) return fail(st);

    std::fputs(polarsim_report_summary(report), stdout);
    for (size_t i = 0; i < polarsim_report_file_count(report); ++i)
        std::fprintf(stdout, "wrote %s\n", polarsim_report_file(report, i));
    const int code = polarsim_report_exit_code(report);
    polarsim_report_destroy(report);
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("polarsim ") + polarsim_version() +
                 " - BB84 polarization-decoder link simulator and finite-key analyzer"};
    app.require_subcommand(1);

    CommonOpts povm_opts, stab_opts, scram_opts, sweep_opts, key_opts;
    std::vector<double> distances;
    std::string tally;

    auto* povm = app.add_subcommand("povm", "Four-port probability table at the current settings");
    add_common(povm, povm_opts);

    auto* stability = app.add_subcommand("stability", "Long-run QBER series without feedback");
    add_common(stability, stab_opts);

    auto* scramble =
        app.add_subcommand("scramble", "Scrambler events with gradient-descent recovery");
    add_common(scramble, scram_opts);

    auto* sweep = app.add_subcommand("sweep", "Secret-key rate versus fiber distance");
    add_common(sweep, sweep_opts);
    sweep->add_option("--distances", distances, "Distances in km (comma separated)")
        ->delimiter(',');

    auto* keyrate = app.add_subcommand("keyrate", "Finite-key analysis of a tally CSV");
    add_common(keyrate, key_opts);
    keyrate->add_option("--tally", tally, "Tally CSV file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    if (povm->parsed()) return run("povm-table", povm_opts, nullptr, nullptr);
    if (stability->parsed()) return run("stability", stab_opts, nullptr, nullptr);
    if (scramble->parsed()) return run("scramble", scram_opts, nullptr, nullptr);
    if (sweep->parsed()) return run("sweep", sweep_opts, &distances, nullptr);
    if (keyrate->parsed()) return run("keyrate", key_opts, nullptr, &tally);
    return 2;
}
