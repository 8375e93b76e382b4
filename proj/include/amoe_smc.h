/*
 * Copyright 2026 The amoe-smc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef AMOE_SMC_H_
#define AMOE_SMC_H_

#include <stddef.h>
#include <stdint.h>

#if defined(AMOE_SMC_BUILDING)
#define AMOE_API __attribute__((visibility("default")))
#else
#define AMOE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum amoe_status {
  AMOE_OK = 0,
  AMOE_ERR_INVALID_ARGUMENT = 1,
  AMOE_ERR_CHOLESKY = 2,
  AMOE_ERR_DEGENERATE_ANCESTORS = 3,
  AMOE_ERR_ABSOLUTE_CONTINUITY = 4,
  AMOE_ERR_DEGENERATE_NORMALIZER = 5,
  AMOE_ERR_FILTER_COLLAPSE = 6,
  AMOE_ERR_INVALID_OBSERVATION = 7,
  AMOE_ERR_CONFIG = 8,
  AMOE_ERR_IO = 9,
  AMOE_ERR_INTERNAL = 100
} amoe_status;

typedef enum amoe_warning {
  AMOE_WARN_COVARIANCE_JITTER = 0,
  AMOE_WARN_RESPONSIBILITY_UNDERFLOW = 1,
  AMOE_WARN_PSEUDO_INVERSE = 2,
  AMOE_WARN_NEWTON_FALLBACK = 3,
  AMOE_WARN_COMPONENT_RESET = 4,
  AMOE_WARN_UNRELIABLE_KLD = 5,
  AMOE_WARN_WARM_START_RESET = 6
} amoe_warning;

typedef struct amoe_model amoe_model;
typedef struct amoe_sample amoe_sample;
typedef struct amoe_mixture amoe_mixture;

/* Library-wide state. Strings returned through char** must be released with amoe_string_free. */
AMOE_API const char* amoe_version(void);
/* Message of the last failed call on this thread; empty when none. */
AMOE_API const char* amoe_last_error(void);
AMOE_API const char* amoe_status_name(amoe_status status);
/* 0 restores the OpenMP default. */
AMOE_API amoe_status amoe_set_num_threads(int threads);
AMOE_API uint64_t amoe_warning_count(amoe_warning kind);
AMOE_API void amoe_reset_warnings(void);
AMOE_API void amoe_string_free(char* s);

/* Models: "linear_gaussian", "bessel" or "tobit"; params_json may be NULL. */
AMOE_API amoe_status amoe_model_create(const char* id, const char* params_json, amoe_model** out);
AMOE_API void amoe_model_free(amoe_model* model);
AMOE_API amoe_status amoe_model_dims(const amoe_model* model, int64_t* state_dim, int64_t* obs_dim);
/* The observation used by the single-step studies (obs_dim values). */
AMOE_API amoe_status amoe_model_default_observation(const amoe_model* model, double* y);

/* Weighted samples. Particles are column-major, one column of `dim` values per particle. */
AMOE_API amoe_status amoe_sample_create(int64_t dim, int64_t n, const double* particles, const double* weights,
                                        amoe_sample** out);
/* n equally weighted draws from the model's single-step filter distribution. */
AMOE_API amoe_status amoe_sample_reference(const amoe_model* model, int64_t n, uint64_t seed, amoe_sample** out);
AMOE_API void amoe_sample_free(amoe_sample* sample);
AMOE_API amoe_status amoe_sample_shape(const amoe_sample* sample, int64_t* dim, int64_t* n);
/* Either output may be NULL. */
AMOE_API amoe_status amoe_sample_read(const amoe_sample* sample, double* particles, double* weights);

/* Mixture-of-experts proposals, exchanged as JSON. */
AMOE_API amoe_status amoe_mixture_from_json(const char* json, amoe_mixture** out);
AMOE_API amoe_status amoe_mixture_to_json(const amoe_mixture* mixture, char** json);
AMOE_API void amoe_mixture_free(amoe_mixture* mixture);
AMOE_API amoe_status amoe_mixture_log_density(const amoe_mixture* mixture, const double* ancestor,
                                              const double* child, double* out);

/*
 * Fits a proposal for one update of `ancestors` given observation y. Keys of
 * config_json (all optional): components, family, nu, gating, pooled,
 * iterations, sample_size, initial_sample_size, step_rule, step_scale,
 * step_exponent, kld_reference_n (0 disables the per-iteration KLD).
 * trace_json may be NULL.
 */
AMOE_API amoe_status amoe_adapt(const amoe_model* model, const amoe_sample* ancestors, const double* y,
                                const char* config_json, uint64_t seed, amoe_mixture** theta, char** trace_json);

/*
 * Runs a filter over `steps` observations (row-major, obs_dim per step).
 * config_json keys: particles, proposal ("prior", "optimal", "adapted"),
 * adjustment ("uniform", "optimal") and the amoe_adapt keys plus
 * warm_start, stride and budget_fraction.
 */
AMOE_API amoe_status amoe_filter(const amoe_model* model, const double* observations, int64_t steps,
                                 const char* config_json, uint64_t seed, char** trace_json);

/* states: (steps + 1) x state_dim, observations: steps x obs_dim, both row-major. */
AMOE_API amoe_status amoe_simulate(const amoe_model* model, int64_t steps, uint64_t seed, double* states,
                                   double* observations);

/* Any output may be NULL. */
AMOE_API amoe_status amoe_weight_diagnostics(const double* weights, int64_t n, double* ess, double* relative_ess,
                                             double* negated_entropy, double* coefficient_of_variation);

/* Runs "adapt-demo", "filter" or "compare-families" and writes its output files. */
AMOE_API amoe_status amoe_run_experiment(const char* command, const char* config_json, char** summary_json);
/* Resolved configuration (defaults merged with config_json) without running anything. */
AMOE_API amoe_status amoe_resolve_config(const char* command, const char* config_json, char** resolved_json);

/* Acceptance self-test. ids_json receives a JSON array of criterion ids. */
AMOE_API amoe_status amoe_selftest_ids(char** ids_json);
AMOE_API amoe_status amoe_selftest_run(const char* id, int* passed, char** detail);

#ifdef __cplusplus
}
#endif

#endif /* AMOE_SMC_H_ */
