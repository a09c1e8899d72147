#include <avtse/avtse.h>

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static int failures = 0;

#define EXPECT(cond)                                                  \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

static avtse_config* small_config(const char* out) {
  static const char* kv[][2] = {{"synthetic.vehicles_per_lane", "70"}, {"synthetic.road_length", "300"},
                                {"synthetic.duration", "200"},         {"synthetic.slowdown.start", "50"},
                                {"synthetic.slowdown.duration", "60"}, {"synthetic.slowdown.x_from", "200"},
                                {"synthetic.slowdown.x_to", "230"},    {"grid.n_h", "20"},
                                {"grid.n_s", "15"},                    {"experiment.penetration", "0.2"}};
  avtse_config* cfg = NULL;
  EXPECT(avtse_config_new(&cfg) == AVTSE_OK);
  for (size_t i = 0; i < sizeof kv / sizeof kv[0]; ++i) EXPECT(avtse_config_set(cfg, kv[i][0], kv[i][1]) == AVTSE_OK);
  EXPECT(avtse_config_set(cfg, "experiment.output_dir", out) == AVTSE_OK);
  return cfg;
}

int main(void) {
  char base[512];
  const char* tmp = getenv("TMPDIR");
  snprintf(base, sizeof base, "%s/avtse_capi", tmp && *tmp ? tmp : "/tmp");
  char path[1024];

  EXPECT(strlen(avtse_version()) > 0);
  EXPECT(strcmp(avtse_status_string(AVTSE_E_IO), "i/o error") == 0);

  /* argument and config errors */
  EXPECT(avtse_config_new(NULL) == AVTSE_E_INVALID_ARG);
  EXPECT(strlen(avtse_last_error()) > 0);
  avtse_config* cfg = small_config(base);
  EXPECT(avtse_config_set(cfg, "no.such.key", "1") == AVTSE_E_CONFIG);
  EXPECT(strstr(avtse_last_error(), "no.such.key") != NULL);
  EXPECT(avtse_config_set(cfg, "grid.n_h", "20") == AVTSE_OK);
  EXPECT(avtse_last_error()[0] == '\0');

  avtse_config* parsed = NULL;
  EXPECT(avtse_config_parse_toml("[grid]\nn_h = 12\n", &parsed) == AVTSE_OK);
  char* json = NULL;
  EXPECT(avtse_config_to_json(parsed, &json) == AVTSE_OK);
  EXPECT(json && strstr(json, "\"n_h\": 12") != NULL);
  avtse_string_free(json);
  avtse_config_free(parsed);
  EXPECT(avtse_config_parse_toml("[grid", &parsed) == AVTSE_E_CONFIG);
  EXPECT(avtse_config_load_toml("/nonexistent.toml", &parsed) == AVTSE_E_IO);

  /* tracks */
  avtse_tracks* ts = NULL;
  EXPECT(avtse_tracks_load(cfg, &ts) == AVTSE_OK);
  size_t nv = 0, np = 0;
  EXPECT(avtse_tracks_count(ts, &nv, &np) == AVTSE_OK);
  EXPECT(nv >= 210 && np > nv);
  snprintf(path, sizeof path, "%s_tracks.csv", base);
  EXPECT(avtse_tracks_write_csv(ts, path) == AVTSE_OK);
  avtse_tracks_free(ts);

  /* staged pipeline through files, then evaluation */
  char gt[1024], sn[1024], est[1024];
  snprintf(gt, sizeof gt, "%s/gt", base);
  snprintf(sn, sizeof sn, "%s/sense", base);
  snprintf(est, sizeof est, "%s/est", base);
  EXPECT(avtse_ground_truth(cfg, gt) == AVTSE_OK);
  EXPECT(avtse_sense(cfg, sn) == AVTSE_OK);
  EXPECT(avtse_estimate(cfg, sn, est) == AVTSE_OK);
  avtse_report* rep = NULL;
  EXPECT(avtse_evaluate(gt, est, &rep) == AVTSE_OK);
  double staged = -1.0, lane1 = -1.0;
  EXPECT(avtse_report_metric(rep, -1, "density", "smape1", &staged) == AVTSE_OK);
  EXPECT(avtse_report_metric(rep, 1, "speed", "nrmse", &lane1) == AVTSE_OK);
  EXPECT(staged > 0.0 && staged < 100.0);
  EXPECT(lane1 >= 0.0);
  EXPECT(avtse_report_metric(rep, 7, "speed", "nrmse", &lane1) == AVTSE_E_INVALID_ARG);
  EXPECT(avtse_report_metric(rep, -1, "flow", "nrmse", &lane1) == AVTSE_E_INVALID_ARG);
  char* text = NULL;
  EXPECT(avtse_report_summary(rep, &text) == AVTSE_OK);
  EXPECT(text && strstr(text, "density") != NULL);
  avtse_string_free(text);
  snprintf(path, sizeof path, "%s/eval.json", base);
  EXPECT(avtse_report_write(rep, path) == AVTSE_OK);
  avtse_report_free(rep);

  /* the full run with the same seed reproduces the staged result */
  avtse_report* run = NULL;
  EXPECT(avtse_run(cfg, &run) == AVTSE_OK);
  double full = -2.0;
  EXPECT(avtse_report_metric(run, -1, "density", "smape1", &full) == AVTSE_OK);
  EXPECT(fabs(full - staged) < 1e-9);
  EXPECT(avtse_report_json(run, &json) == AVTSE_OK);
  EXPECT(json && strstr(json, "\"config\"") != NULL);
  avtse_string_free(json);
  avtse_report_free(run);

  /* sweep and platoon */
  size_t rows = 0, failed = 0;
  snprintf(path, sizeof path, "%s/sweep.csv", base);
  EXPECT(avtse_sweep(cfg, "missing_rate", "0.1,2.0", path, &rows, &failed) == AVTSE_OK);
  EXPECT(rows == 1 && failed == 1);
  EXPECT(avtse_sweep(cfg, "colour", "1", path, &rows, &failed) == AVTSE_E_CONFIG);
  EXPECT(strcmp(avtse_last_stage(), "config") == 0);

  int lanes[] = {1};
  avtse_report *ded = NULL, *uni = NULL;
  EXPECT(avtse_platoon(cfg, lanes, 1, &ded, &uni) == AVTSE_OK);
  avtse_report_free(ded);
  avtse_report_free(uni);
  EXPECT(avtse_platoon(cfg, lanes, 0, &ded, &uni) == AVTSE_E_CONFIG);

  /* stage-tagged data errors */
  EXPECT(avtse_config_set(cfg, "data.source", "csv") == AVTSE_OK);
  EXPECT(avtse_config_set(cfg, "data.path", "/nonexistent.csv") == AVTSE_OK);
  EXPECT(avtse_run(cfg, &run) == AVTSE_E_IO);
  EXPECT(strcmp(avtse_last_stage(), "ingest") == 0);
  avtse_config_free(cfg);

  if (failures) fprintf(stderr, "%d check(s) failed\n", failures);
  else printf("all C API checks passed\n");
  return failures ? 1 : 0;
}
