#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>

#include "racer/harness.hpp"

namespace {

void print_stats_table(const std::vector<racer::LapStats>& rows) {
  std::printf("%4s %4s %10s %10s %10s %10s %7s\n", "iter", "cbf", "completed", "lap_time",
              "mean_dev", "max|x|", "violat");
  for (const auto& r : rows) {
    std::printf("%4d %4s %10s %10.2f %10.3f %10.3f %7d\n", r.iteration,
                r.cbf_enabled ? "yes" : "no", r.completed ? "yes" : "no", r.lap_time,
                r.mean_deviation, r.max_abs_xlat, r.violation_steps);
  }
}

int cmd_run(const std::string& config_path, const std::string& cbf_override,
            long long seed_override, const std::string& out_override) {
  racer::ExperimentConfig cfg = racer::load_config(config_path);
  if (!cbf_override.empty()) racer::apply_config_line(cfg, "experiment.cbf", cbf_override);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (cfg.out_dir.empty()) cfg.out_dir = "run_out";

  const racer::ExperimentReport report = racer::run_experiment(cfg);
  print_stats_table(report.rows);
  std::printf("outputs written to %s\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_raceline(const std::string& track_path, const std::string& out_path, bool open_track,
                 double w_veh, double a_lat, double a_acc, double a_brk, double v_max) {
  const racer::TrackDef track = racer::build_track(racer::load_track_csv(track_path), !open_track);
  racer::VelocityLimits limits;
  limits.a_lat_max = a_lat;
  limits.a_lon_accel_max = a_acc;
  limits.a_lon_brake_max = a_brk;
  limits.v_max = v_max;
  const racer::RacelineTrajectory rl = racer::build_raceline(track, w_veh, limits);
  racer::save_raceline_csv(out_path, rl);
  std::printf("raceline with %zu points written to %s (length %.2f m)\n", rl.points.size(),
              out_path.c_str(), rl.total_length);
  return 0;
}

// Re-derive lap statistics from the per-iteration trajectory logs of a run
// directory.
int cmd_stats(const std::string& run_dir) {
  std::ifstream info(run_dir + "/run_info.txt");
  racer::require(info.good(), racer::Errc::io_error, "no run_info.txt in " + run_dir);
  std::map<std::string, double> meta;
  std::string line;
  while (std::getline(info, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    if (key == "reference") continue;
    meta[key] = std::stod(line.substr(eq + 1));
  }
  const double lane_width = meta.at("lane_width");
  const double track_length = meta.at("track_length");

  std::vector<racer::LapStats> rows;
  for (const bool cbf : {false, true}) {
    const std::string dir = run_dir + (cbf ? "/cbf_on" : "/cbf_off");
    if (!std::filesystem::exists(dir)) continue;
    for (int iter = 0;; ++iter) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s/traj_%02d.csv", dir.c_str(), iter);
      if (!std::filesystem::exists(name)) break;

      std::ifstream in(name);
      std::string row;
      std::getline(in, row);  // header
      racer::TrajectoryLog log;
      double prev_s = 0.0, progress = 0.0;
      bool first = true;
      while (std::getline(in, row)) {
        racer::StepRecord rec;
        double x, y, psi, omega, v, v_perp, c;
        const int got = std::sscanf(row.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf",
                                    &rec.t, &x, &y, &psi, &rec.s, &rec.state.x_lat,
                                    &rec.state.theta, &omega, &v, &v_perp, &c, &rec.ref_alpha);
        if (got != 12) continue;
        if (!first) {
          double step = rec.s - prev_s;
          if (step < -0.5 * track_length) step += track_length;
          progress += step;
        }
        first = false;
        prev_s = rec.s;
        log.steps.push_back(rec);
      }
      if (log.steps.empty()) break;
      racer::LapStats st = racer::lap_stats(log, lane_width, track_length, iter, cbf);
      st.completed = progress >= track_length - 1.0;
      rows.push_back(st);
    }
  }
  print_stats_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"safety-assured racing control pipeline"};
  app.require_subcommand(1);

  std::string config_path, cbf_override, out_override;
  long long seed_override = -1;
  auto* run = app.add_subcommand("run", "run the full training experiment");
  run->add_option("--config", config_path, "configuration file")->required();
  run->add_option("--cbf", cbf_override, "on|off|both (overrides the config)");
  run->add_option("--seed", seed_override, "seed override");
  run->add_option("--out", out_override, "output directory override");

  std::string track_path, rl_out;
  bool open_track = false;
  double w_veh = 1.2, a_lat = 3.5, a_acc = 3.0, a_brk = 4.0, v_max = 11.0;
  auto* rl = app.add_subcommand("raceline", "compute the minimum-curvature line for a track");
  rl->add_option("--track", track_path, "track csv (x,y,w_half)")->required();
  rl->add_option("--out", rl_out, "output csv")->required();
  rl->add_flag("--open", open_track, "treat the track as an open path");
  rl->add_option("--w-veh", w_veh, "vehicle width, m");
  rl->add_option("--a-lat", a_lat, "lateral acceleration limit");
  rl->add_option("--a-accel", a_acc, "forward acceleration limit");
  rl->add_option("--a-brake", a_brk, "braking limit");
  rl->add_option("--v-max", v_max, "speed cap");

  std::string run_dir;
  auto* st = app.add_subcommand("stats", "re-derive lap statistics from a run directory");
  st->add_option("--run", run_dir, "run output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, cbf_override, seed_override, out_override);
    if (rl->parsed()) return cmd_raceline(track_path, rl_out, open_track, w_veh, a_lat, a_acc, a_brk, v_max);
    if (st->parsed()) return cmd_stats(run_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
