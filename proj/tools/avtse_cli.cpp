#include <CLI11.hpp>

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "avtse/avtse.h"

namespace {

struct Ctx {
  std::string config_path;
  std::vector<std::string> overrides;
  avtse_config* cfg = nullptr;
};

int report_failure(avtse_status st, const Ctx& ctx, const char* command) {
  const char* stage = avtse_last_stage();
  std::fprintf(stderr, "avtse %s failed (%s) in stage '%s': %s\n", command, avtse_status_string(st),
               *stage ? stage : command, avtse_last_error());
  if (ctx.cfg) {
    char* json = nullptr;
    if (avtse_config_to_json(ctx.cfg, &json) == AVTSE_OK) {
      std::fprintf(stderr, "effective config:\n%s\n", json);
      avtse_string_free(json);
    }
  }
  return static_cast<int>(st);
}

avtse_status build_config(Ctx& ctx) {
  avtse_status st = ctx.config_path.empty() ? avtse_config_new(&ctx.cfg)
                                            : avtse_config_load_toml(ctx.config_path.c_str(), &ctx.cfg);
  if (st != AVTSE_OK) return st;
  for (const auto& o : ctx.overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "invalid --set '%s': expected key=value\n", o.c_str());
      return AVTSE_E_INVALID_ARG;
    }
    st = avtse_config_set(ctx.cfg, o.substr(0, eq).c_str(), o.substr(eq + 1).c_str());
    if (st != AVTSE_OK) return st;
  }
  return AVTSE_OK;
}

void print_report(avtse_report* r) {
  char* text = nullptr;
  if (avtse_report_summary(r, &text) == AVTSE_OK) {
    std::fputs(text, stdout);
    avtse_string_free(text);
  }
}

std::vector<int> parse_lanes(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic state estimation from connected-vehicle perception"};
  app.require_subcommand(1);
  Ctx ctx;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", ctx.config_path, "TOML experiment config")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", ctx.overrides, "override, key=value (repeatable)");
  };

  std::string out, in, truth_dir, est_dir, param, values, lanes = "1";
  bool print_config = false;

  auto* synth = app.add_subcommand("synth", "write trajectories of the configured data source as CSV");
  add_common(synth);
  synth->add_option("-o,--out", out, "output CSV")->required();

  auto* gt = app.add_subcommand("ground-truth", "compute ground-truth density and speed matrices");
  add_common(gt);
  gt->add_option("-o,--out", out, "output directory")->required();

  auto* sense = app.add_subcommand("sense", "simulate AV perception and aggregate observations");
  add_common(sense);
  sense->add_option("-o,--out", out, "output directory")->required();

  auto* est = app.add_subcommand("estimate", "complete the observed matrices");
  add_common(est);
  est->add_option("-i,--in", in, "directory written by 'sense'")->required();
  est->add_option("-o,--out", out, "output directory")->required();

  auto* ev = app.add_subcommand("evaluate", "compare estimates against ground truth");
  ev->add_option("-t,--truth", truth_dir, "ground-truth directory")->required();
  ev->add_option("-e,--estimate", est_dir, "estimate directory")->required();
  ev->add_option("-o,--out", out, "report JSON path");

  auto* run = app.add_subcommand("run", "full pipeline over every configured seed");
  add_common(run);
  run->add_flag("--print-config", print_config, "print the effective config first");

  auto* sweep = app.add_subcommand("sweep", "vary one parameter and tabulate errors");
  add_common(sweep);
  sweep->add_option("-p,--param", param, "parameter, e.g. penetration, missing_rate")->required();
  sweep->add_option("-v,--values", values, "comma separated values")->required();
  sweep->add_option("-o,--out", out, "output CSV")->required();

  auto* plat = app.add_subcommand("platoon", "dedicated-lane vs uniform AV placement");
  add_common(plat);
  plat->add_option("-l,--lanes", lanes, "dedicated lanes, comma separated");

  CLI11_PARSE(app, argc, argv);

  auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  avtse_status st = AVTSE_OK;

  if (sub != ev) {
    st = build_config(ctx);
    if (st != AVTSE_OK) return report_failure(st, ctx, "config");
  }

  if (sub == synth) {
    avtse_tracks* ts = nullptr;
    st = avtse_tracks_load(ctx.cfg, &ts);
    if (st == AVTSE_OK) st = avtse_tracks_write_csv(ts, out.c_str());
    if (st == AVTSE_OK) {
      size_t nv = 0, np = 0;
      avtse_tracks_count(ts, &nv, &np);
      std::printf("wrote %zu vehicles, %zu points to %s\n", nv, np, out.c_str());
    }
    avtse_tracks_free(ts);
  } else if (sub == gt) {
    st = avtse_ground_truth(ctx.cfg, out.c_str());
    if (st == AVTSE_OK) std::printf("ground truth written to %s\n", out.c_str());
  } else if (sub == sense) {
    st = avtse_sense(ctx.cfg, out.c_str());
    if (st == AVTSE_OK) std::printf("observations written to %s\n", out.c_str());
  } else if (sub == est) {
    st = avtse_estimate(ctx.cfg, in.c_str(), out.c_str());
    if (st == AVTSE_OK) std::printf("estimates written to %s\n", out.c_str());
  } else if (sub == ev) {
    avtse_report* r = nullptr;
    st = avtse_evaluate(truth_dir.c_str(), est_dir.c_str(), &r);
    if (st == AVTSE_OK) {
      print_report(r);
      if (!out.empty()) st = avtse_report_write(r, out.c_str());
    }
    avtse_report_free(r);
  } else if (sub == run) {
    if (print_config) {
      char* json = nullptr;
      if (avtse_config_to_json(ctx.cfg, &json) == AVTSE_OK) {
        std::printf("%s\n", json);
        avtse_string_free(json);
      }
    }
    avtse_report* r = nullptr;
    st = avtse_run(ctx.cfg, &r);
    if (st == AVTSE_OK) print_report(r);
    avtse_report_free(r);
  } else if (sub == sweep) {
    size_t rows = 0, failed = 0;
    st = avtse_sweep(ctx.cfg, param.c_str(), values.c_str(), out.c_str(), &rows, &failed);
    if (st == AVTSE_OK) std::printf("%zu rows written to %s, %zu failed points\n", rows, out.c_str(), failed);
  } else if (sub == plat) {
    std::vector<int> l;
    try {
      l = parse_lanes(lanes);
    } catch (const std::exception&) {
      std::fprintf(stderr, "invalid --lanes: %s\n", lanes.c_str());
      avtse_config_free(ctx.cfg);
      return AVTSE_E_INVALID_ARG;
    }
    avtse_report *d = nullptr, *u = nullptr;
    st = avtse_platoon(ctx.cfg, l.data(), l.size(), &d, &u);
    if (st == AVTSE_OK) {
      std::printf("dedicated lanes:\n");
      print_report(d);
      std::printf("\nuniform placement:\n");
      print_report(u);
    }
    avtse_report_free(d);
    avtse_report_free(u);
  }

  int rc = st == AVTSE_OK ? 0 : report_failure(st, ctx, name.c_str());
  avtse_config_free(ctx.cfg);
  return rc;
}
