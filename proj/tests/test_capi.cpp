// Exercises the shared-library surface the way an external consumer would:
// through polarsim.h only.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "polarsim.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("polarsim_capi_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

constexpr double kPi = 3.141592653589793238462643383279502884;

}  // namespace

TEST_CASE("version and status names") {
    CHECK(std::strlen(polarsim_version()) >= 5);
    CHECK(std::string(polarsim_status_name(POLARSIM_OK)) == "ok");
    CHECK(std::string(polarsim_status_name(POLARSIM_ERR_PARSE)) == "parse error");
}

TEST_CASE("direct computations") {
    double p[4] = {};
    const double nominal[4] = {0.0, kPi, 0.0, 0.5 * kPi};
    REQUIRE(polarsim_detection_probabilities(1, 0, 0, 0, nominal, p) == POLARSIM_OK);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.0));
    CHECK(p[2] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p[3] == doctest::Approx(0.25).epsilon(1e-12));

    CHECK(polarsim_detection_probabilities(0, 0, 0, 0, nominal, p) ==
          POLARSIM_ERR_INVALID_ARGUMENT);
    CHECK(std::strlen(polarsim_last_error()) > 0);

    double theta[4] = {};
    REQUIRE(polarsim_solve_compensation(0.0, 0.0, theta) == POLARSIM_OK);
    CHECK(theta[1] == doctest::Approx(kPi).epsilon(1e-12));
    CHECK(theta[3] == doctest::Approx(0.5 * kPi).epsilon(1e-12));

    // compensation re-diagonalizes the drifted state end to end
    REQUIRE(polarsim_solve_compensation(0.4, -1.1, theta) == POLARSIM_OK);
    const double ca = std::cos(0.4);
    const double sa = std::sin(0.4);
    REQUIRE(polarsim_detection_probabilities(ca, 0.0, sa * std::cos(-1.1), sa * std::sin(-1.1),
                                             theta, p) == POLARSIM_OK);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(0.0));

    double h = 0.0;
    REQUIRE(polarsim_binary_entropy(0.5, &h) == POLARSIM_OK);
    CHECK(h == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(polarsim_binary_entropy(1.5, &h) == POLARSIM_ERR_INVALID_ARGUMENT);
    CHECK(polarsim_binary_entropy(0.5, nullptr) == POLARSIM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("scenario lifecycle through the C surface") {
    polarsim_scenario* scn = nullptr;
    REQUIRE(polarsim_scenario_create("povm", &scn) == POLARSIM_OK);
    const fs::path dir = fresh_dir("povm");
    REQUIRE(polarsim_scenario_set_output_dir(scn, dir.string().c_str()) == POLARSIM_OK);
    REQUIRE(polarsim_scenario_set_seed(scn, 5) == POLARSIM_OK);

    char* json = nullptr;
    REQUIRE(polarsim_scenario_to_json(scn, &json) == POLARSIM_OK);
    CHECK(std::string(json).find("\"kind\": \"povm-table\"") != std::string::npos);

    // the emitted JSON round-trips
    polarsim_scenario* again = nullptr;
    REQUIRE(polarsim_scenario_from_json(json, &again) == POLARSIM_OK);
    char* json2 = nullptr;
    REQUIRE(polarsim_scenario_to_json(again, &json2) == POLARSIM_OK);
    CHECK(std::string(json) == json2);
    polarsim_string_free(json);
    polarsim_string_free(json2);
    polarsim_scenario_destroy(again);

    polarsim_report* rep = nullptr;
    REQUIRE(polarsim_run(scn, &rep) == POLARSIM_OK);
    CHECK(polarsim_report_exit_code(rep) == 0);
    CHECK(std::string(polarsim_report_summary(rep)).find("povm") != std::string::npos);
    CHECK(std::string(polarsim_report_json(rep)).find("nominal_check") != std::string::npos);
    REQUIRE(polarsim_report_file_count(rep) >= 2);
    CHECK(fs::exists(polarsim_report_file(rep, 0)));
    CHECK(polarsim_report_file(rep, 999) == nullptr);
    polarsim_report_destroy(rep);
    polarsim_scenario_destroy(scn);
}

TEST_CASE("sweep through the C surface honors distance overrides") {
    polarsim_scenario* scn = nullptr;
    REQUIRE(polarsim_scenario_create("sweep", &scn) == POLARSIM_OK);
    const fs::path dir = fresh_dir("sweep");
    REQUIRE(polarsim_scenario_set_output_dir(scn, dir.string().c_str()) == POLARSIM_OK);
    const double km[] = {25.0};
    REQUIRE(polarsim_scenario_set_distances(scn, km, 1) == POLARSIM_OK);
    REQUIRE(polarsim_scenario_set_mode(scn, "expect") == POLARSIM_OK);

    polarsim_report* rep = nullptr;
    REQUIRE(polarsim_run(scn, &rep) == POLARSIM_OK);
    CHECK(polarsim_report_exit_code(rep) == 0);
    CHECK(std::string(polarsim_report_summary(rep)).find("25km=") != std::string::npos);
    CHECK(fs::exists(dir / "tally_25km.csv"));
    CHECK_FALSE(fs::exists(dir / "tally_50km.csv"));
    polarsim_report_destroy(rep);
    polarsim_scenario_destroy(scn);
}

TEST_CASE("error paths") {
    polarsim_scenario* scn = nullptr;
    CHECK(polarsim_scenario_create("warp-drive", &scn) == POLARSIM_ERR_INVALID_ARGUMENT);
    CHECK(polarsim_scenario_create(nullptr, &scn) == POLARSIM_ERR_INVALID_ARGUMENT);
    CHECK(polarsim_scenario_from_file("/no/such/file.json", &scn) == POLARSIM_ERR_PARSE);
    CHECK(polarsim_scenario_from_json("{\"kind\": \"stability\", \"bogus\": 1}", &scn) ==
          POLARSIM_ERR_PARSE);
    CHECK(std::string(polarsim_last_error()).find("bogus") != std::string::npos);

    REQUIRE(polarsim_scenario_create("stability", &scn) == POLARSIM_OK);
    CHECK(polarsim_scenario_set_kind(scn, "nope") == POLARSIM_ERR_INVALID_ARGUMENT);
    CHECK(polarsim_scenario_set_mode(scn, "maybe") == POLARSIM_ERR_INVALID_ARGUMENT);
    polarsim_scenario_destroy(scn);
}

TEST_CASE("keyrate from tally file") {
    const fs::path dir = fresh_dir("keyrate");
    const fs::path tally = dir / "ref.csv";
    {
        std::ofstream out(tally);
        out << "basis,intensity,n,m,duration_s\n";
        out << "Z,mu,30800000,159000,200\n";
        out << "Z,nu,957000,8040,200\n";
        out << "X,mu,1090000,8140,200\n";
        out << "X,nu,29100,884,200\n";
    }
    char* report = nullptr;
    REQUIRE(polarsim_key_rate_from_tally(tally.string().c_str(), nullptr, &report) == POLARSIM_OK);
    const std::string text = report;
    polarsim_string_free(report);
    CHECK(text.find("\"skr_bps\"") != std::string::npos);
    CHECK(text.find("\"s_z1_l\"") != std::string::npos);

    CHECK(polarsim_key_rate_from_tally((dir / "missing.csv").string().c_str(), nullptr, &report) ==
          POLARSIM_ERR_PARSE);

    // security overrides flow through the scenario JSON
    char* strict = nullptr;
    REQUIRE(polarsim_key_rate_from_tally(tally.string().c_str(),
                                         "{\"security\": {\"f_ec\": 1.5}}", &strict) == POLARSIM_OK);
    CHECK(std::string(strict).find("skr_bps") != std::string::npos);
    polarsim_string_free(strict);
}
