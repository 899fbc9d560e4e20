#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "racer/harness.hpp"

namespace racer {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  fail(Errc::bad_config, "expected a boolean, got '" + v + "'");
}

}  // namespace

void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto d = [&] { return std::stod(value); };
  auto i = [&] { return std::stoi(value); };

  if (key == "track.file") cfg.track_file = value;
  else if (key == "track.closed") cfg.track_closed = parse_bool(value);
  else if (key == "reference") {
    if (value == "raceline") cfg.reference = ReferenceMode::raceline;
    else if (value == "centerline") cfg.reference = ReferenceMode::centerline;
    else fail(Errc::bad_config, "reference must be raceline or centerline");
  } else if (key == "experiment.cbf") {
    if (value == "on") cfg.arm = CbfArm::on;
    else if (value == "off") cfg.arm = CbfArm::off;
    else if (value == "both") cfg.arm = CbfArm::both;
    else fail(Errc::bad_config, "experiment.cbf must be on, off or both");
  } else if (key == "experiment.belief") {
    if (value == "model") cfg.belief = BeliefSource::model;
    else if (value == "ground_truth") cfg.belief = BeliefSource::ground_truth;
    else fail(Errc::bad_config, "experiment.belief must be model or ground_truth");
  } else if (key == "experiment.iterations") cfg.n_iterations = i();
  else if (key == "experiment.steps_cap") cfg.steps_per_lap = i();
  else if (key == "experiment.dt") cfg.dt = d();
  else if (key == "experiment.seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "experiment.out_dir") cfg.out_dir = value;
  else if (key == "experiment.write_logs") cfg.write_logs = parse_bool(value);
  else if (key == "experiment.save_models") cfg.save_models = parse_bool(value);
  else if (key == "noise.x_lat") cfg.noise.x_lat = d();
  else if (key == "noise.theta") cfg.noise.theta = d();
  else if (key == "noise.c") cfg.noise.c = d();
  else if (key == "vehicle.m") cfg.vehicle.m = d();
  else if (key == "vehicle.Iz") cfg.vehicle.Iz = d();
  else if (key == "vehicle.lf") cfg.vehicle.l_f = d();
  else if (key == "vehicle.lr") cfg.vehicle.l_r = d();
  else if (key == "vehicle.Cf") cfg.vehicle.C_f = d();
  else if (key == "vehicle.Cr") cfg.vehicle.C_r = d();
  else if (key == "vehicle.delta_max") cfg.vehicle.delta_max = d();
  else if (key == "vehicle.ax_max") cfg.vehicle.a_x_max = d();
  else if (key == "vehicle.v_min_dynamic") cfg.vehicle.v_min_dynamic = d();
  else if (key == "mpc.N") cfg.mpc.N = i();
  else if (key == "mpc.dt") cfg.mpc.dt = d();
  else if (key == "mpc.q_xlat") cfg.mpc.weights.x_lat = d();
  else if (key == "mpc.q_theta") cfg.mpc.weights.theta = d();
  else if (key == "mpc.q_omega") cfg.mpc.weights.omega = d();
  else if (key == "mpc.q_v") cfg.mpc.weights.v = d();
  else if (key == "mpc.q_vperp") cfg.mpc.weights.v_perp = d();
  else if (key == "mpc.q_c") cfg.mpc.weights.c = d();
  else if (key == "mpc.r_delta") cfg.mpc.weights.r_delta = d();
  else if (key == "mpc.r_ax") cfg.mpc.weights.r_ax = d();
  else if (key == "mpc.terminal_scale") cfg.mpc.weights.terminal_scale = d();
  else if (key == "pid.kp") cfg.pid.kp = d();
  else if (key == "pid.ki") cfg.pid.ki = d();
  else if (key == "pid.kd") cfg.pid.kd = d();
  else if (key == "pid.integral_limit") cfg.pid.integral_limit = d();
  else if (key == "cbf.lane_width") cfg.cbf.lane_width = d();
  else if (key == "cbf.lambda") cfg.cbf.lambda = d();
  else if (key == "cbf.theta_max") cfg.cbf.theta_max = d();
  else if (key == "cbf.eta") cfg.cbf.eta = d();
  else if (key == "cbf.k_err") cfg.cbf.k_err = d();
  else if (key == "cbf.n_rollouts") cfg.cbf.n_rollouts = i();
  else if (key == "cbf.sigma_min") cfg.cbf.sigma_min = d();
  else if (key == "learner.rays") cfg.learner.rays = i();
  else if (key == "learner.r_max") cfg.learner.r_max = d();
  else if (key == "learner.members") {
    cfg.learner.n_members = i();
    cfg.cbf.n_rollouts = cfg.learner.n_members;
  } else if (key == "learner.features") cfg.learner.feature_width = i();
  else if (key == "learner.ridge") cfg.learner.ridge = d();
  else if (key == "learner.feature_scale") cfg.learner.feature_scale = d();
  else if (key == "learner.bootstrap") cfg.learner.bootstrap = parse_bool(value);
  else if (key == "learner.bootstrap_cap") cfg.learner.bootstrap_cap = i();
  else if (key == "learner.min_records") cfg.learner.min_records = i();
  else if (key == "learner.record_stride") cfg.learner.record_stride = i();
  else if (key == "raceline.w_veh") cfg.w_veh = d();
  else if (key == "raceline.a_lat_max") cfg.limits.a_lat_max = d();
  else if (key == "raceline.a_accel_max") cfg.limits.a_lon_accel_max = d();
  else if (key == "raceline.a_brake_max") cfg.limits.a_lon_brake_max = d();
  else if (key == "raceline.v_max") cfg.limits.v_max = d();
  else fail(Errc::bad_config, "unknown configuration key '" + key + "'");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot open config " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, Errc::bad_config,
            path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_config_line(cfg, key, value);
  }
  cfg.vehicle.wheelbase = cfg.vehicle.l_f + cfg.vehicle.l_r;
  cfg.validate();
  return cfg;
}

}  // namespace racer
