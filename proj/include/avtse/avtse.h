#ifndef AVTSE_AVTSE_H
#define AVTSE_AVTSE_H

#include <stddef.h>

#if defined(AVTSE_BUILDING)
#define AVTSE_API __attribute__((visibility("default")))
#else
#define AVTSE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct avtse_config avtse_config;
typedef struct avtse_tracks avtse_tracks;
typedef struct avtse_report avtse_report;

typedef enum avtse_status {
  AVTSE_OK = 0,
  AVTSE_E_INVALID_ARG = 1,
  AVTSE_E_SCHEMA = 2,
  AVTSE_E_DATA = 3,
  AVTSE_E_CONFIG = 4,
  AVTSE_E_BOUNDS = 5,
  AVTSE_E_ESTIMATION = 6,
  AVTSE_E_METRIC = 7,
  AVTSE_E_IO = 8,
  AVTSE_E_INTERNAL = 9
} avtse_status;

AVTSE_API const char* avtse_version(void);
AVTSE_API const char* avtse_status_string(avtse_status status);
/* Message and pipeline stage of the last failure on the calling thread. */
AVTSE_API const char* avtse_last_error(void);
AVTSE_API const char* avtse_last_stage(void);

/* Strings returned through char** are owned by the caller. */
AVTSE_API void avtse_string_free(char* s);

AVTSE_API avtse_status avtse_config_new(avtse_config** out);
AVTSE_API avtse_status avtse_config_load_toml(const char* path, avtse_config** out);
AVTSE_API avtse_status avtse_config_parse_toml(const char* text, avtse_config** out);
/* Dotted key, e.g. "experiment.penetration", value as text. */
AVTSE_API avtse_status avtse_config_set(avtse_config* cfg, const char* key, const char* value);
AVTSE_API avtse_status avtse_config_to_json(const avtse_config* cfg, char** json);
AVTSE_API void avtse_config_free(avtse_config* cfg);

/* Loads the configured data source (CSV or synthetic scenario). */
AVTSE_API avtse_status avtse_tracks_load(const avtse_config* cfg, avtse_tracks** out);
AVTSE_API avtse_status avtse_tracks_write_csv(const avtse_tracks* tracks, const char* path);
AVTSE_API avtse_status avtse_tracks_count(const avtse_tracks* tracks, size_t* vehicles, size_t* points);
AVTSE_API void avtse_tracks_free(avtse_tracks* tracks);

/* Pipeline stages. Directories are created as needed. */
AVTSE_API avtse_status avtse_ground_truth(const avtse_config* cfg, const char* out_dir);
/* Uses the first configured seed; writes messages.jsonl and observed matrices. */
AVTSE_API avtse_status avtse_sense(const avtse_config* cfg, const char* out_dir);
AVTSE_API avtse_status avtse_estimate(const avtse_config* cfg, const char* sense_dir, const char* out_dir);
AVTSE_API avtse_status avtse_evaluate(const char* truth_dir, const char* estimate_dir, avtse_report** out);

/* Full pipeline over every seed; artifacts go to experiment.output_dir. */
AVTSE_API avtse_status avtse_run(const avtse_config* cfg, avtse_report** out);
/* values_csv: comma separated values of `parameter`; failures go to
   <out_csv>.failures.csv. */
AVTSE_API avtse_status avtse_sweep(const avtse_config* cfg, const char* parameter, const char* values_csv,
                                   const char* out_csv, size_t* rows, size_t* failed);
AVTSE_API avtse_status avtse_platoon(const avtse_config* cfg, const int* lanes, size_t n_lanes,
                                     avtse_report** dedicated, avtse_report** uniform);

AVTSE_API avtse_status avtse_report_json(const avtse_report* report, char** json);
AVTSE_API avtse_status avtse_report_summary(const avtse_report* report, char** text);
/* quantity: "density" | "speed"; metric: "nrmse" | "smape1" | "smape2";
   lane < 0 selects the lane average. Values in percent. */
AVTSE_API avtse_status avtse_report_metric(const avtse_report* report, int lane, const char* quantity,
                                           const char* metric, double* value);
AVTSE_API avtse_status avtse_report_write(const avtse_report* report, const char* path);
AVTSE_API void avtse_report_free(avtse_report* report);

#ifdef __cplusplus
}
#endif

#endif
