// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef NPUCP_NPUCP_H_
#define NPUCP_NPUCP_H_

#include <stddef.h>
#include <stdint.h>

#if defined(NPUCP_BUILDING_LIBRARY)
#define NPUCP_API __attribute__((visibility("default")))
#else
#define NPUCP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

// Status codes. Validation codes double as simulator failure classes.
typedef enum npucp_status {
  NPUCP_OK = 0,
  NPUCP_ERR_INTERNAL = 1,
  NPUCP_ERR_USAGE = 2,
  NPUCP_ERR_PARSE = 3,
  NPUCP_ERR_STRUCTURAL = 4,
  NPUCP_ERR_UNSUPPORTED_OP = 5,
  NPUCP_ERR_INFEASIBLE_LAYER = 6,
  NPUCP_ERR_SOLVER = 7,
  NPUCP_ERR_CONTRACT = 8,
  NPUCP_ERR_VALIDATION_DEPENDENCY = 10,
  NPUCP_ERR_VALIDATION_BANK_CONFLICT = 11,
  NPUCP_ERR_VALIDATION_CAPACITY = 12,
  NPUCP_ERR_VALIDATION_LOCKSTEP = 13,
  NPUCP_ERR_VALIDATION_OUTPUT = 14,
  NPUCP_ERR_VALIDATION_PERSISTENCY = 15,
  NPUCP_ERR_VALIDATION_ALLOCATION = 16,
  NPUCP_ERR_IO = 20
} npucp_status;

typedef struct npucp_model npucp_model;
typedef struct npucp_machine npucp_machine;
typedef struct npucp_artifact npucp_artifact;
typedef struct npucp_sim npucp_sim;

typedef struct npucp_compile_options {
  int fusion;                // nonzero enables layer fusion
  int64_t delta;             // datamover penalty; negative keeps the machine's value
  int reduction_factor;      // height ratio between the two tile-size options
  int64_t solver_budget_ms;  // per CP solve
  int partition_size;        // computes per scheduling window, 0 for one window
  int serial_schedule;       // nonzero emits the no-overlap schedule
  const char* lp_dump_dir;   // NULL or a directory for LP files
} npucp_compile_options;

typedef struct npucp_compile_summary {
  int64_t objective;
  int64_t latency_cycles;
  int64_t n_dm;
  int64_t ticks;
  int64_t tiles;
  int64_t windows;
  int64_t v2p_updates;
  double total_wall_ms;
} npucp_compile_summary;

typedef struct npucp_sim_summary {
  int64_t latency_cycles;
  int64_t latency_with_v2p_cycles;
  int64_t n_dm;
  int64_t dm_traffic_bytes;
  int64_t v2p_updates;
  int peak_banks;
  int capacity;
  int checks_passed;   // nonzero when no rule was violated
  int outputs_match;   // nonzero when outputs equal the reference
  int failure_code;    // npucp_status of the first failure, NPUCP_OK when clean
} npucp_sim_summary;

NPUCP_API const char* npucp_version(void);
NPUCP_API const char* npucp_status_name(int status);
// Message of the last failed call on this thread; empty after a success.
NPUCP_API const char* npucp_last_error(void);
// Frees strings returned through char** out parameters.
NPUCP_API void npucp_string_free(char* s);

NPUCP_API int npucp_model_parse(const char* json, size_t len, npucp_model** out);
// Presets: chain, residual, depthwise, uneven, mobilenetv2-prefix, random.
NPUCP_API int npucp_model_generate(const char* preset, uint64_t seed, int layers, int64_t height, int64_t width,
                                   int64_t channels, npucp_model** out);
NPUCP_API int npucp_model_to_json(const npucp_model* model, char** out);
NPUCP_API int npucp_model_layer_count(const npucp_model* model, int* out);
NPUCP_API void npucp_model_free(npucp_model* model);

NPUCP_API int npucp_machine_default(npucp_machine** out);
NPUCP_API int npucp_machine_parse(const char* json, size_t len, npucp_machine** out);
NPUCP_API int npucp_machine_to_json(const npucp_machine* machine, char** out);
NPUCP_API void npucp_machine_free(npucp_machine* machine);

NPUCP_API void npucp_compile_options_init(npucp_compile_options* options);
NPUCP_API int npucp_compile(const npucp_model* model, const npucp_machine* machine, const npucp_compile_options* options,
                            npucp_artifact** out);
NPUCP_API int npucp_artifact_parse(const char* json, size_t len, npucp_artifact** out);
NPUCP_API int npucp_artifact_to_json(const npucp_artifact* artifact, char** out);
// Stage wall times of a compile; empty stages for a parsed artifact.
NPUCP_API int npucp_artifact_timings_json(const npucp_artifact* artifact, char** out);
// Tile candidates of both size options; only available on freshly compiled artifacts.
NPUCP_API int npucp_artifact_tiles_json(const npucp_artifact* artifact, char** out);
NPUCP_API int npucp_artifact_v2p_listing(const npucp_artifact* artifact, char** out);
NPUCP_API int npucp_artifact_summary(const npucp_artifact* artifact, npucp_compile_summary* out);
NPUCP_API void npucp_artifact_free(npucp_artifact* artifact);

// Runs the simulator on inputs and parameters drawn from `seed`. A run that finds violations
// still returns NPUCP_OK; the summary carries the failure.
NPUCP_API int npucp_simulate(const npucp_artifact* artifact, uint64_t seed, npucp_sim** out);
// `data_json`: {"seed": n, "inputs": {id: [HWC values]}, "params": {id: {"weights": [...], "bias": [...]}}}.
// Tensors left out are drawn from the seed.
NPUCP_API int npucp_simulate_with_data(const npucp_artifact* artifact, const char* data_json, size_t len,
                                       npucp_sim** out);
NPUCP_API int npucp_sim_summary_get(const npucp_sim* sim, npucp_sim_summary* out);
NPUCP_API int npucp_sim_report_json(const npucp_sim* sim, char** out);
NPUCP_API int npucp_sim_summary_text(const npucp_sim* sim, char** out);
NPUCP_API int npucp_sim_memory_csv(const npucp_sim* sim, char** out);
NPUCP_API int npucp_sim_gantt_json(const npucp_sim* sim, char** out);
// {id: {"h", "w", "c", "values": [HWC]}} for every model output.
NPUCP_API int npucp_sim_outputs_json(const npucp_sim* sim, char** out);
// NULL or empty paths are skipped.
NPUCP_API int npucp_sim_write_reports(const npucp_sim* sim, const char* memory_csv_path, const char* gantt_json_path,
                                      const char* summary_path);
NPUCP_API void npucp_sim_free(npucp_sim* sim);

#ifdef __cplusplus
}  // extern "C"
#endif

#endif  // NPUCP_NPUCP_H_
