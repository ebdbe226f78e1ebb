#ifndef OCPG_OCPG_H
#define OCPG_OCPG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef OCPG_BUILDING_LIBRARY
#    define OCPG_API __declspec(dllexport)
#  else
#    define OCPG_API __declspec(dllimport)
#  endif
#else
#  define OCPG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every function returns one of these. On failure ocpg_last_error() holds a
   message for the calling thread. */
typedef enum ocpg_status {
  OCPG_OK = 0,
  OCPG_ERR_INVALID_ARGUMENT = 1,
  OCPG_ERR_CONFIG = 2,
  OCPG_ERR_DIVERGENCE = 3,
  OCPG_ERR_IO = 4,
  OCPG_ERR_RUNTIME = 5
} ocpg_status;

typedef enum ocpg_estimator {
  OCPG_ESTIMATOR_OCPG = 0,
  OCPG_ESTIMATOR_HOCPG = 1,
  OCPG_ESTIMATOR_OC = 2,
  OCPG_ESTIMATOR_HOC = 3
} ocpg_estimator;

typedef enum ocpg_layout {
  OCPG_LAYOUT_TABULAR = 0,
  OCPG_LAYOUT_SHARED_TRUNK = 1
} ocpg_layout;

typedef struct ocpg_config ocpg_config;
typedef struct ocpg_mdp ocpg_mdp;
typedef struct ocpg_arch ocpg_arch;
typedef struct ocpg_run ocpg_run;
typedef struct ocpg_report ocpg_report;

OCPG_API const char* ocpg_version(void);
OCPG_API const char* ocpg_last_error(void);

/* Training configuration: key=value text, '#' comments. */
OCPG_API ocpg_status ocpg_config_new(ocpg_config** out);
OCPG_API ocpg_status ocpg_config_load(const char* path, ocpg_config** out);
OCPG_API ocpg_status ocpg_config_parse(const char* text, ocpg_config** out);
/* Applies one key=value pair; unknown keys are an error. */
OCPG_API ocpg_status ocpg_config_set(ocpg_config* cfg, const char* key, const char* value);
OCPG_API ocpg_status ocpg_config_validate(const ocpg_config* cfg);
OCPG_API ocpg_status ocpg_config_save(const ocpg_config* cfg, const char* path);
OCPG_API void ocpg_config_free(ocpg_config* cfg);

/* Tabular MDPs. */
OCPG_API ocpg_status ocpg_mdp_from_config(const ocpg_config* cfg, ocpg_mdp** out);
OCPG_API ocpg_status ocpg_mdp_four_rooms(double slip, double gamma, ocpg_mdp** out);
OCPG_API ocpg_status ocpg_mdp_random(uint64_t seed, int n_states, int n_actions, double gamma, ocpg_mdp** out);
OCPG_API ocpg_status ocpg_mdp_load(const char* path, ocpg_mdp** out);
OCPG_API ocpg_status ocpg_mdp_save(const ocpg_mdp* mdp, const char* path);
OCPG_API int ocpg_mdp_num_states(const ocpg_mdp* mdp);
OCPG_API int ocpg_mdp_num_actions(const ocpg_mdp* mdp);
/* V*(s0) by value iteration. */
OCPG_API ocpg_status ocpg_mdp_optimal_value(const ocpg_mdp* mdp, double* out);
OCPG_API void ocpg_mdp_free(ocpg_mdp* mdp);

/* Option architectures. n_options holds n_levels - 1 counts, top level first. */
OCPG_API ocpg_status ocpg_arch_new(int n_states, int n_actions, int n_levels, const int* n_options,
                                   ocpg_layout layout, int trunk_width, uint64_t init_seed, ocpg_arch** out);
OCPG_API ocpg_status ocpg_arch_load(const char* path, ocpg_arch** out);
OCPG_API ocpg_status ocpg_arch_save(const ocpg_arch* arch, const char* path);
OCPG_API ocpg_status ocpg_arch_randomize(ocpg_arch* arch, uint64_t seed, double scale);
OCPG_API size_t ocpg_arch_num_params(const ocpg_arch* arch);
OCPG_API int ocpg_arch_num_levels(const ocpg_arch* arch);
OCPG_API ocpg_status ocpg_arch_get_params(const ocpg_arch* arch, double* out, size_t n);
OCPG_API ocpg_status ocpg_arch_set_params(ocpg_arch* arch, const double* values, size_t n);
/* π^level(·|s, prefix) into out[0..n_choices); prefix has level - 1 entries. */
OCPG_API ocpg_status ocpg_arch_policy(const ocpg_arch* arch, int level, int s, const int* prefix, double* out,
                                      size_t n);
OCPG_API void ocpg_arch_free(ocpg_arch* arch);

/* Exact quantities from the start state s0 with o0 = the all-zero stack. */
OCPG_API ocpg_status ocpg_exact_return(const ocpg_arch* arch, const ocpg_mdp* mdp, double* out);
/* OCPG (N = 2) or HOCPG (any N) exact gradient; n must equal num_params. */
OCPG_API ocpg_status ocpg_exact_gradient(const ocpg_arch* arch, const ocpg_mdp* mdp, ocpg_estimator estimator,
                                         int flip_beta_term, double* out, size_t n);
/* Central differences of the exact return with per-index step h·(1 + |θ|). */
OCPG_API ocpg_status ocpg_finite_diff_gradient(const ocpg_arch* arch, const ocpg_mdp* mdp, double h, double* out,
                                               size_t n);
/* Per-state update mass of the policy over options (unified != 0) or the
   baseline; n must equal the number of states. */
OCPG_API ocpg_status ocpg_update_mass_map(const ocpg_arch* arch, const ocpg_mdp* mdp, int unified, double* out,
                                          size_t n);

/* Verification suites. `only` is a comma-separated list of suite names or
   NULL for all. */
OCPG_API ocpg_status ocpg_verify(const char* only, int flip_beta_term, uint64_t seed, ocpg_report** out);
OCPG_API int ocpg_report_passed(const ocpg_report* report);
OCPG_API size_t ocpg_report_count(const ocpg_report* report);
OCPG_API const char* ocpg_report_name(const ocpg_report* report, size_t i);
OCPG_API int ocpg_report_suite_passed(const ocpg_report* report, size_t i);
OCPG_API double ocpg_report_worst(const ocpg_report* report, size_t i);
OCPG_API double ocpg_report_tolerance(const ocpg_report* report, size_t i);
/* The pass/fail table as text. */
OCPG_API const char* ocpg_report_text(const ocpg_report* report);
OCPG_API void ocpg_report_free(ocpg_report* report);

/* Training. out_dir may be NULL; otherwise the run files are written there. */
OCPG_API ocpg_status ocpg_train(const ocpg_config* cfg, const char* out_dir, ocpg_run** out);
OCPG_API size_t ocpg_run_num_evals(const ocpg_run* run);
OCPG_API ocpg_status ocpg_run_eval(const ocpg_run* run, size_t i, int64_t* global_step, double* mean_return,
                                   double* mean_discounted_return, double* steps_per_termination);
OCPG_API int64_t ocpg_run_global_step(const ocpg_run* run);
/* Copies the trained parameters into a new architecture. */
OCPG_API ocpg_status ocpg_run_arch(const ocpg_run* run, ocpg_arch** out);
OCPG_API void ocpg_run_free(ocpg_run* run);

typedef struct ocpg_bench_result {
  ocpg_estimator base;
  ocpg_estimator unified;
  int64_t updates;
  int64_t base_steps;
  int64_t unified_steps;
  double base_updates_per_sec;
  double unified_updates_per_sec;
  double ratio; /* unified / base */
} ocpg_bench_result;

OCPG_API ocpg_status ocpg_bench(const ocpg_config* cfg, int64_t updates, int block, ocpg_bench_result* out);

/* Appendix-style metric files for a finished run directory. */
OCPG_API ocpg_status ocpg_analyze(const char* run_dir, const char* out_dir, uint64_t seed);
/* doorway_ocpg.csv and doorway_oc.csv for the two-room fixture. */
OCPG_API ocpg_status ocpg_write_doorway_maps(const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
