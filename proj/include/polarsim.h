/* polarsim C API: a BB84 polarization-decoder simulation and finite-key
 * analysis toolkit behind a flat shared-library surface.
 *
 * All functions return a polarsim_status; out-parameters are written only
 * on POLARSIM_OK. Handles are opaque and freed with their destroy
 * function. polarsim_last_error() describes the most recent failure on
 * the calling thread. Strings returned through char** out-parameters are
 * released with polarsim_string_free().
 */
#ifndef POLARSIM_H
#define POLARSIM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define POLARSIM_API __declspec(dllexport)
#else
#define POLARSIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum polarsim_status {
    POLARSIM_OK = 0,
    POLARSIM_ERR_INVALID_ARGUMENT = 1,
    POLARSIM_ERR_PARSE = 2,
    POLARSIM_ERR_NO_DATA = 3,
    POLARSIM_ERR_IO = 4,
    POLARSIM_ERR_INTERNAL = 5
} polarsim_status;

/* Library semantic version, e.g. "0.1.0". Static storage. */
POLARSIM_API const char* polarsim_version(void);

/* Short name of a status code. Static storage. */
POLARSIM_API const char* polarsim_status_name(polarsim_status status);

/* Detail message for the last failure on this thread. Static storage,
 * overwritten by the next failing call. */
POLARSIM_API const char* polarsim_last_error(void);

POLARSIM_API void polarsim_string_free(char* text);

/* ---- scenarios ------------------------------------------------------- */

typedef struct polarsim_scenario polarsim_scenario;
typedef struct polarsim_report polarsim_report;

/* Creates a scenario of the given kind ("povm-table"|"povm", "stability",
 * "scramble", "sweep", "keyrate") with that kind's defaults. */
POLARSIM_API polarsim_status polarsim_scenario_create(const char* kind, polarsim_scenario** out);

/* Builds a scenario from a JSON document (text or file). */
POLARSIM_API polarsim_status polarsim_scenario_from_json(const char* json_text,
                                                         polarsim_scenario** out);
POLARSIM_API polarsim_status polarsim_scenario_from_file(const char* path,
                                                         polarsim_scenario** out);

POLARSIM_API void polarsim_scenario_destroy(polarsim_scenario* scenario);

POLARSIM_API polarsim_status polarsim_scenario_set_kind(polarsim_scenario* scenario,
                                                        const char* kind);
POLARSIM_API polarsim_status polarsim_scenario_set_seed(polarsim_scenario* scenario,
                                                        uint64_t seed);
/* mode: "expect" or "mc" */
POLARSIM_API polarsim_status polarsim_scenario_set_mode(polarsim_scenario* scenario,
                                                        const char* mode);
POLARSIM_API polarsim_status polarsim_scenario_set_output_dir(polarsim_scenario* scenario,
                                                              const char* dir);
POLARSIM_API polarsim_status polarsim_scenario_set_tally_file(polarsim_scenario* scenario,
                                                              const char* path);
POLARSIM_API polarsim_status polarsim_scenario_set_distances(polarsim_scenario* scenario,
                                                             const double* km, size_t count);

/* Canonical JSON for the scenario (round-trips through from_json). */
POLARSIM_API polarsim_status polarsim_scenario_to_json(const polarsim_scenario* scenario,
                                                       char** out_json);

/* Runs the scenario, writing its output files under the configured
 * directory. The report owns its strings. */
POLARSIM_API polarsim_status polarsim_run(const polarsim_scenario* scenario,
                                          polarsim_report** out);

POLARSIM_API void polarsim_report_destroy(polarsim_report* report);
POLARSIM_API const char* polarsim_report_summary(const polarsim_report* report);
POLARSIM_API const char* polarsim_report_json(const polarsim_report* report);
/* Process exit-code semantics: 0 ok, 1 non-convergence, 2 invalid input. */
POLARSIM_API int polarsim_report_exit_code(const polarsim_report* report);
POLARSIM_API size_t polarsim_report_file_count(const polarsim_report* report);
POLARSIM_API const char* polarsim_report_file(const polarsim_report* report, size_t index);

/* ---- direct computations --------------------------------------------- */

/* Four-port detection probabilities (H, V, D, A) of the state
 * (alpha, beta) under shifter phases theta[0..3]. The state is normalized
 * internally; the zero vector is invalid. */
POLARSIM_API polarsim_status polarsim_detection_probabilities(double alpha_re, double alpha_im,
                                                              double beta_re, double beta_im,
                                                              const double theta[4],
                                                              double out_p[4]);

/* Shifter phases that compensate a fiber drift (varphi, phi). */
POLARSIM_API polarsim_status polarsim_solve_compensation(double varphi, double phi,
                                                         double out_theta[4]);

/* Binary Shannon entropy in bits; x must lie in [0, 1]. */
POLARSIM_API polarsim_status polarsim_binary_entropy(double x, double* out);

/* Finite-key report (JSON) for a tally CSV, using the source and security
 * blocks of `scenario_json` (may be "{}" or NULL for keyrate defaults). */
POLARSIM_API polarsim_status polarsim_key_rate_from_tally(const char* tally_csv_path,
                                                          const char* scenario_json,
                                                          char** out_report_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* POLARSIM_H */
