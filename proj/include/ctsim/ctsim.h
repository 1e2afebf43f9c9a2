#ifndef CTSIM_CTSIM_H
#define CTSIM_CTSIM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CTSIM_API __declspec(dllexport)
#else
#define CTSIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ctsim_status {
  CTSIM_OK = 0,
  CTSIM_E_INVALID_ARGUMENT = 1,
  CTSIM_E_PAST_EVENT = 2,
  CTSIM_E_OUT_OF_RANGE = 3,
  CTSIM_E_PARSE = 4,
  CTSIM_E_INVALID_SCENARIO = 5,
  CTSIM_E_IO = 6,
  CTSIM_E_RUNTIME = 7,
  CTSIM_E_NULL = 8,
  CTSIM_E_BUFFER_TOO_SMALL = 9,
  CTSIM_E_BAD_FRAME = 10
} ctsim_status;

typedef enum ctsim_role {
  CTSIM_ROLE_LEADER = 0,
  CTSIM_ROLE_FOLLOWER = 1,
  CTSIM_ROLE_CONTROLLER = 2,
  CTSIM_ROLE_DEVICE = 3
} ctsim_role;

typedef struct ctsim_scenario ctsim_scenario;
typedef struct ctsim_run ctsim_run;
typedef struct ctsim_sweep ctsim_sweep;

/* Absent values (no eligible samples) are NaN. */
typedef struct ctsim_node_metrics {
  uint32_t node;
  ctsim_role role;
  double pid_err_pct;
  double trx_err_pct;
  double avg_err_pct;
  double abs_err_cm_s;
  double sync_mean_ms;
  double sync_max_ms;
  double duty_cycle;
  uint64_t records;
} ctsim_node_metrics;

typedef struct ctsim_run_summary {
  uint64_t seed;
  double gp_ms;
  uint64_t rounds;
  uint64_t rounds_all_received;
  uint64_t events;
  double sync_mean_ms;
  double sync_max_ms;
  double mean_pid_err_pct; /* followers / commanded devices */
  double mean_avg_err_pct; /* followers / commanded devices */
} ctsim_run_summary;

CTSIM_API const char* ctsim_version(void);
CTSIM_API const char* ctsim_status_name(ctsim_status status);
/* Message of the last failure on the calling thread ("" if none). */
CTSIM_API const char* ctsim_last_error(void);

CTSIM_API ctsim_status ctsim_scenario_load(const char* path, ctsim_scenario** out);
CTSIM_API ctsim_status ctsim_scenario_parse(const char* text, ctsim_scenario** out);
/* Assigns one key; the scenario is re-validated before running. */
CTSIM_API ctsim_status ctsim_scenario_set(ctsim_scenario* scenario, const char* key,
                                          const char* value);
CTSIM_API ctsim_status ctsim_scenario_set_seed(ctsim_scenario* scenario, uint64_t seed);
CTSIM_API ctsim_status ctsim_scenario_use_full_durations(ctsim_scenario* scenario);
CTSIM_API ctsim_status ctsim_scenario_validate(const ctsim_scenario* scenario);
/* Copies the echo into buf. *needed (optional) receives the size including
   the terminator; CTSIM_E_BUFFER_TOO_SMALL when cap is short. */
CTSIM_API ctsim_status ctsim_scenario_echo(const ctsim_scenario* scenario, char* buf, size_t cap,
                                           size_t* needed);
CTSIM_API void ctsim_scenario_free(ctsim_scenario* scenario);

CTSIM_API ctsim_status ctsim_run_scenario(const ctsim_scenario* scenario, ctsim_run** out);
CTSIM_API ctsim_status ctsim_run_summary_get(const ctsim_run* run, ctsim_run_summary* out);
CTSIM_API ctsim_status ctsim_run_node_count(const ctsim_run* run, size_t* out);
CTSIM_API ctsim_status ctsim_run_node_metrics(const ctsim_run* run, size_t node,
                                              ctsim_node_metrics* out);
CTSIM_API ctsim_status ctsim_run_report_csv(const ctsim_run* run, char* buf, size_t cap,
                                            size_t* needed);
/* report.csv, config.echo and trace/<run_id>.log. */
CTSIM_API ctsim_status ctsim_run_write(const ctsim_run* run, const char* dir);
CTSIM_API void ctsim_run_free(ctsim_run* run);

CTSIM_API ctsim_status ctsim_sweep_load(const char* path, ctsim_sweep** out);
CTSIM_API ctsim_status ctsim_sweep_parse(const char* text, const char* base_dir,
                                         ctsim_sweep** out);
CTSIM_API ctsim_status ctsim_sweep_size(const ctsim_sweep* sweep, size_t* cells, size_t* runs);
/* Runs every cell and writes report.csv, cells.csv, heatmap.csv,
   config.echo and trace/ under out_dir. Failed cells are counted, not fatal. */
CTSIM_API ctsim_status ctsim_sweep_run(const ctsim_sweep* sweep, unsigned jobs, int full,
                                       const char* out_dir, size_t* failed_cells);
CTSIM_API void ctsim_sweep_free(ctsim_sweep* sweep);

CTSIM_API uint16_t ctsim_crc16(const uint8_t* data, size_t len);
CTSIM_API ctsim_status ctsim_slp_encode(uint8_t phase, uint8_t seq, const uint8_t* payload,
                                        size_t len, uint8_t* out, size_t cap, size_t* written);
/* CTSIM_E_BAD_FRAME on SOF, length or CRC failure. */
CTSIM_API ctsim_status ctsim_slp_decode(const uint8_t* bytes, size_t len, uint8_t* phase,
                                        uint8_t* seq, uint8_t* payload, size_t cap,
                                        size_t* payload_len);

#ifdef __cplusplus
}
#endif

#endif
