#include "racer/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace racer {

void ExperimentConfig::validate() const {
  vehicle.validate();
  mpc.validate();
  cbf.validate();
  learner.validate();
  limits.validate();
  require(n_iterations >= 1, Errc::bad_config, "need at least one iteration");
  require(steps_per_lap >= 10, Errc::bad_config, "step cap too small");
  require(dt > 0 && dt <= 0.1, Errc::bad_config, "dt must lie in (0, 0.1]");
}

// ---------------------------------------------------------------------------
// built-in circuits

namespace {

// Closed circuit with two straights and three constant-radius corners joined
// by linear curvature ramps, so the curvature profile is continuous the way
// a real road is. The straight lengths are solved so the loop closes exactly.
std::vector<TrackPoint> turtle_circuit(double scale, double w_half) {
  const double k1 = 1.0 / (14.0 * scale);
  const double k2 = 1.0 / (20.0 * scale);
  const double k3 = 1.0 / (10.0 * scale);
  const double phi1 = 160.0 * std::numbers::pi / 180.0;
  const double phi2 = 95.0 * std::numbers::pi / 180.0;
  const double phi3 = 105.0 * std::numbers::pi / 180.0;
  const double blend = 4.0 * scale;

  // per-corner turn budget: ramps contribute half their plateau turn
  const double A1 = phi1 / k1 - blend;
  const double A2 = phi2 / k2 - blend;
  const double A3 = phi3 / k3 - blend;

  // curvature pieces after the first straight; the second straight slots in
  // after the first corner
  struct Piece {
    double c0, c1, len;
    int straight_slot;  // -1: fixed piece, otherwise index of the gap
  };
  const std::vector<Piece> pieces = {
      {0, 0, 0, 0},          // straight 1 (length solved below)
      {0, k1, blend, -1},    {k1, k1, A1, -1}, {k1, 0, blend, -1},
      {0, 0, 0, 1},          // straight 2
      {0, k2, blend, -1},    {k2, k2, A2, -1}, {k2, 0, blend, -1},
      {0, k3, blend, -1},    {k3, k3, A3, -1}, {k3, 0, blend, -1},
  };

  const double step = 0.05 * std::max(scale, 0.2);
  auto integrate_pieces = [&](double L1, double L2, std::vector<TrackPoint>* out) {
    double x = 0.0, y = 0.0, h = 0.0;
    for (const auto& pc : pieces) {
      const double len = pc.straight_slot == 0 ? L1 : (pc.straight_slot == 1 ? L2 : pc.len);
      if (len <= 0.0) continue;
      const int n = std::max(2, static_cast<int>(len / step));
      const double ds = len / n;
      for (int i = 0; i < n; ++i) {
        if (out) out->push_back({x, y, w_half});
        const double c_here = pc.c0 + (pc.c1 - pc.c0) * (i + 0.5) / n;
        x += std::cos(h + 0.5 * c_here * ds) * ds;
        y += std::sin(h + 0.5 * c_here * ds) * ds;
        h += c_here * ds;
      }
    }
    return Eigen::Vector2d{x, y};
  };

  // close the loop with the two straight lengths: straight 1 runs along the
  // initial heading, straight 2 along the heading after corner 1
  const Eigen::Vector2d gap = integrate_pieces(0.0, 0.0, nullptr);
  const Eigen::Vector2d u1{1.0, 0.0};
  const Eigen::Vector2d u2{std::cos(phi1), std::sin(phi1)};
  Eigen::Matrix2d M;
  M << u1, u2;
  const Eigen::Vector2d lengths = M.colPivHouseholderQr().solve(-gap);

  std::vector<TrackPoint> pts;
  integrate_pieces(lengths(0), lengths(1), &pts);
  return pts;
}

}  // namespace

std::vector<TrackPoint> default_track_points() { return turtle_circuit(1.0, 2.0); }
std::vector<TrackPoint> small_track_points() { return turtle_circuit(0.16, 0.4); }

TrackDef default_track() { return build_track(default_track_points(), true); }

// ---------------------------------------------------------------------------
// simulator

Simulator::Simulator(const TrackDef& track, const VehicleParams& params, double dt)
    : track_(track), params_(params), dt_(dt) {
  params_.validate();
  require(dt > 0 && dt <= 0.1, Errc::precondition, "simulator dt must lie in (0, 0.1]");
}

void Simulator::reset(double s, double x_lat, double theta, double v, double omega,
                      double v_perp) {
  s_ = track_.wrap_s(s);
  state_ = DynamicState{x_lat, theta, omega, v, v_perp, track_.curvature_at(s_)};
  progress_ = 0.0;
  t_ = 0.0;
  kinematic_ = v < params_.v_min_dynamic;
  if (kinematic_) {
    state_.omega = 0.0;
    state_.v_perp = 0.0;
  }
}

GlobalPose Simulator::global_pose() const {
  return from_frenet(FrenetPose{s_, state_.x_lat, state_.theta, state_.c}, track_);
}

FrenetPose Simulator::frenet() const {
  return FrenetPose{s_, state_.x_lat, state_.theta, state_.c};
}

void Simulator::step(const Control& u) {
  const double c = track_.curvature_at(s_);
  state_.c = c;

  // model switch with hysteresis; the downshift zeroes the slip states
  if (!kinematic_ && state_.v < params_.v_min_dynamic) {
    kinematic_ = true;
    state_.omega = 0.0;
    state_.v_perp = 0.0;
  } else if (kinematic_ && state_.v >= 1.2 * params_.v_min_dynamic) {
    kinematic_ = false;
    state_.omega = state_.v * c;
    state_.v_perp = 0.0;
  }

  const double K3 = 2.0 * (params_.l_f * params_.l_f * params_.C_f +
                           params_.l_r * params_.l_r * params_.C_r) /
                    params_.Iz;
  const double K4 = 2.0 * params_.l_f * params_.C_f / params_.Iz;
  const double K5 = 2.0 * (params_.C_f + params_.C_r) / params_.m;

  auto sdot = [&](double v, double theta, double v_perp, double x_lat) {
    const double denom = std::max(0.05, 1.0 - c * x_lat);
    return (v * std::cos(theta) - v_perp * std::sin(theta)) / denom;
  };

  if (kinematic_) {
    // y = [x_lat, theta, v, s]
    Eigen::Vector4d y{state_.x_lat, state_.theta, state_.v, s_};
    auto f = [&](const Eigen::Vector4d& q) {
      const double v = std::max(q(2), 0.0);
      return Eigen::Vector4d{v * std::sin(q(1)),
                             v * std::sin(u.delta) / params_.wheelbase - v * c, u.a_x,
                             sdot(v, q(1), 0.0, q(0))};
    };
    const Eigen::Vector4d k1 = f(y);
    const Eigen::Vector4d k2 = f(y + 0.5 * dt_ * k1);
    const Eigen::Vector4d k3 = f(y + 0.5 * dt_ * k2);
    const Eigen::Vector4d k4 = f(y + dt_ * k3);
    y += dt_ / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    state_.x_lat = y(0);
    state_.theta = y(1);
    state_.v = std::max(y(2), 0.0);
    progress_ += y(3) - s_;
    s_ = track_.wrap_s(y(3));
  } else {
    // y = [x_lat, theta, omega, v, v_perp, s]
    Eigen::Matrix<double, 6, 1> y;
    y << state_.x_lat, state_.theta, state_.omega, state_.v, state_.v_perp, s_;
    auto f = [&](const Eigen::Matrix<double, 6, 1>& q) {
      const double v = std::max(q(3), 0.25 * params_.v_min_dynamic);
      Eigen::Matrix<double, 6, 1> d;
      d << v * std::sin(q(1)) + q(4) * std::cos(q(1)), q(2) - v * c,
          -K3 * q(2) / v + K4 * u.delta, u.a_x, -K5 * q(4) / v,
          sdot(v, q(1), q(4), q(0));
      return d;
    };
    // the 1/v terms stiffen at low speed; substep to stay inside the
    // stability region of the explicit integrator
    const double v_eff = std::max(std::min(state_.v, state_.v + u.a_x * dt_),
                                  0.25 * params_.v_min_dynamic);
    const double stiffness = std::max(K3, K5) / v_eff;
    const int substeps = std::min(64, std::max(1, static_cast<int>(dt_ * stiffness / 1.2) + 1));
    const double h = dt_ / substeps;
    for (int sub = 0; sub < substeps; ++sub) {
      const auto k1 = f(y);
      const auto k2 = f(Eigen::Matrix<double, 6, 1>(y + 0.5 * h * k1));
      const auto k3 = f(Eigen::Matrix<double, 6, 1>(y + 0.5 * h * k2));
      const auto k4 = f(Eigen::Matrix<double, 6, 1>(y + h * k3));
      y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    state_.x_lat = y(0);
    state_.theta = y(1);
    state_.omega = y(2);
    state_.v = y(3);
    state_.v_perp = y(4);
    progress_ += y(5) - s_;
    s_ = track_.wrap_s(y(5));
  }
  state_.c = track_.curvature_at(s_);
  t_ += dt_;
}

// ---------------------------------------------------------------------------
// episode

namespace {

double reference_alpha_at(const RacelineTrajectory& ref, const TrackDef& track, double s) {
  const std::size_t n = ref.points.size();
  double w = track.wrap_s(s) / track.spacing();
  if (!track.closed()) w = std::min(w, static_cast<double>(n - 1));
  const std::size_t i = std::min(static_cast<std::size_t>(w), n - 1);
  const std::size_t j = (i + 1 < n) ? i + 1 : (track.closed() ? 0 : i);
  const double t = w - static_cast<double>(i);
  return ref.points[i].alpha + t * (ref.points[j].alpha - ref.points[i].alpha);
}

double reference_theta_at(const RacelineTrajectory& ref, const TrackDef& track, double s) {
  const std::size_t n = ref.points.size();
  double w = track.wrap_s(s) / track.spacing();
  const std::size_t i = std::min(static_cast<std::size_t>(w), n - 1);
  return wrap_angle(ref.points[i].psi - track.heading_at(track.s_at(i)));
}

double reference_speed_at(const RacelineTrajectory& ref, const TrackDef& track, double s) {
  const std::size_t n = ref.points.size();
  double w = track.wrap_s(s) / track.spacing();
  if (!track.closed()) w = std::min(w, static_cast<double>(n - 1));
  const std::size_t i = std::min(static_cast<std::size_t>(w), n - 1);
  const std::size_t j = (i + 1 < n) ? i + 1 : (track.closed() ? 0 : i);
  const double t = w - static_cast<double>(i);
  return ref.points[i].v_x + t * (ref.points[j].v_x - ref.points[i].v_x);
}

}  // namespace

RunContext make_run_context(const ExperimentConfig& cfg) {
  cfg.validate();
  RunContext ctx;
  ctx.cfg = cfg;
  ctx.track = cfg.track_file.empty()
                  ? build_track(default_track_points(), cfg.track_closed)
                  : build_track(load_track_csv(cfg.track_file), cfg.track_closed);
  require(2.0 * ctx.track.min_half_width() >= cfg.cbf.lane_width - 1e-9, Errc::bad_config,
          "configured lane width exceeds the narrowest part of the track");
  ctx.reference = (cfg.reference == ReferenceMode::raceline)
                      ? build_raceline(ctx.track, cfg.w_veh, cfg.limits)
                      : build_centerline_reference(ctx.track, cfg.limits);
  return ctx;
}

IterationResult run_iteration(const RunContext& ctx, const Models* models, int iteration,
                              bool cbf_enabled, Rng& rng) {
  const ExperimentConfig& cfg = ctx.cfg;
  const TrackDef& track = ctx.track;
  const RacelineTrajectory& ref = ctx.reference;
  require(iteration == 0 || models != nullptr, Errc::model_missing,
          "learner-driven round needs trained models");

  // physical ranges for sanitizing predicted states: the runner knows the
  // track, so estimates outside what the track allows are clipped
  double c_bound = 0.0;
  for (double k : track.curvature()) c_bound = std::max(c_bound, std::abs(k));
  c_bound *= 1.05;
  const double x_bound = 0.5 * cfg.cbf.lane_width + 0.5;
  const double theta_bound = 1.5 * cfg.cbf.theta_max;

  Simulator sim(track, cfg.vehicle, cfg.dt);
  sim.reset(0.0, reference_alpha_at(ref, track, 0.0), reference_theta_at(ref, track, 0.0),
            reference_speed_at(ref, track, 0.0),
            reference_speed_at(ref, track, 0.0) * ref.points.front().kappa, 0.0);

  IterationResult out;
  out.log.dt = cfg.dt;

  PIDState drive_pid;
  bool failed = false;
  bool completed = false;
  const double lap_len = track.total_length();
  const double crash = 0.5 * cfg.cbf.lane_width + 0.5;

  for (int step = 0; step < cfg.steps_per_lap; ++step) {
    const DynamicState st = sim.state();
    const GlobalPose pose = sim.global_pose();
    const FrenetPose fr = sim.frenet();

    StepRecord rec;
    rec.t = sim.time();
    rec.pose = pose;
    rec.s = sim.s();
    rec.state = st;
    rec.ref_alpha = reference_alpha_at(ref, track, sim.s());
    rec.h = barrier_values(st, cfg.cbf);

    try {
      rec.obs = observe(pose, st.v, st.v_perp, st.omega, track, cfg.learner.rays,
                        cfg.learner.r_max);

      // expert solve: drives round 0, labels afterwards
      const ModelKind kind = sim.kinematic_mode() ? ModelKind::kinematic : ModelKind::dynamic;
      const ReferenceWindow window = reference_states(ref, track, fr, cfg.mpc, kind, cfg.vehicle);
      const Eigen::VectorXd x0 = (kind == ModelKind::kinematic)
                                     ? Eigen::VectorXd(to_vector(KinematicState{
                                           st.x_lat, st.theta, st.v, st.c}))
                                     : Eigen::VectorXd(to_vector(st));
      const MPCResult expert = mpc_solve(x0, window, cfg.vehicle, cfg.mpc);
      rec.label_delta = expert.u.delta;
      rec.label_v_target = window.v_ref[1];
      rec.mpc_objective = expert.qp_objective;

      Control applied;
      if (iteration == 0) {
        applied = expert.u;
      } else {
        const GaussianBelief com = predict_control(models->com, rec.obs);
        rec.com_mean = com.mean.head<2>();
        rec.com_std = com.stddev.head<2>();

        // convert (delta, v_target) members to (delta, a_x) through the
        // longitudinal PID; the integrator advances once on the mean error
        Eigen::MatrixXd u_samples(com.count(), 2);
        for (int i = 0; i < com.count(); ++i) {
          const double d = std::clamp(com.samples(i, 0), -cfg.vehicle.delta_max,
                                      cfg.vehicle.delta_max);
          const double ax = drive_pid.preview(com.samples(i, 1) - st.v, cfg.pid, cfg.dt,
                                              cfg.vehicle.a_x_max);
          u_samples(i, 0) = d;
          u_samples(i, 1) = ax;
        }
        const GaussianBelief u_ref = GaussianBelief::from_samples(u_samples);
        drive_pid.step(com.mean(1) - st.v, cfg.pid, cfg.dt, cfg.vehicle.a_x_max);

        if (!cbf_enabled) {
          applied.delta = std::clamp(u_ref.mean(0), -cfg.vehicle.delta_max, cfg.vehicle.delta_max);
          applied.a_x = std::clamp(u_ref.mean(1), -cfg.vehicle.a_x_max, cfg.vehicle.a_x_max);
        } else {
          // state belief: predicted or ground-truth (x_lat, theta, c), plus
          // measured body rates, optionally perturbed by the noise model
          const int n = cfg.cbf.n_rollouts;
          Eigen::MatrixXd partial(n, 3);
          if (cfg.belief == BeliefSource::model) {
            const GaussianBelief stb = predict_state(models->st, rec.obs);
            rec.st_mean = stb.mean.head<3>();
            rec.st_std = stb.stddev.head<3>();
            for (int i = 0; i < n; ++i) {
              const auto row = stb.samples.row(i % stb.count());
              partial(i, 0) = std::clamp(row(0), -x_bound, x_bound);
              partial(i, 1) = std::clamp(row(1), -theta_bound, theta_bound);
              partial(i, 2) = std::clamp(row(2), -c_bound, c_bound);
            }
          } else {
            for (int i = 0; i < n; ++i) partial.row(i) = Eigen::RowVector3d{st.x_lat, st.theta, st.c};
          }
          if (cfg.noise.any()) {
            const Eigen::RowVector3d est_err{rng.normal(0.0, cfg.noise.x_lat),
                                             rng.normal(0.0, cfg.noise.theta),
                                             rng.normal(0.0, cfg.noise.c)};
            for (int i = 0; i < n; ++i) {
              partial.row(i) += est_err;
              partial.row(i) += Eigen::RowVector3d{rng.normal(0.0, cfg.noise.x_lat),
                                                   rng.normal(0.0, cfg.noise.theta),
                                                   rng.normal(0.0, cfg.noise.c)};
            }
          }

          Eigen::MatrixXd full;
          if (sim.kinematic_mode()) {
            full.resize(n, 4);
            for (int i = 0; i < n; ++i)
              full.row(i) << partial(i, 0), partial(i, 1), st.v, partial(i, 2);
          } else {
            full.resize(n, 6);
            for (int i = 0; i < n; ++i)
              full.row(i) << partial(i, 0), partial(i, 1), st.omega, st.v, st.v_perp,
                  partial(i, 2);
          }
          const FilterResult fres =
              safety_filter(u_ref, GaussianBelief::from_samples(full), cfg.vehicle, cfg.cbf);
          applied = fres.u;
          rec.slack = fres.diag.slack;
        }
      }

      rec.applied = applied;
      if (step % cfg.learner.record_stride == 0)
        out.new_records.push_back(DataRecord{rec.obs, rec.label_delta, rec.label_v_target,
                                             st.x_lat, st.theta, st.c, iteration});
      out.log.steps.push_back(rec);
      sim.step(applied);
    } catch (const Error& e) {
      out.log.steps.push_back(rec);
      out.failure = e.what();
      failed = true;
      break;
    }

    if (std::abs(sim.state().x_lat) > crash) {
      failed = true;
      break;
    }
    if (sim.progress() >= lap_len) {
      completed = true;
      break;
    }
  }

  // closing record so the log covers the final state
  StepRecord tail;
  tail.t = sim.time();
  tail.pose = sim.global_pose();
  tail.s = sim.s();
  tail.state = sim.state();
  tail.ref_alpha = reference_alpha_at(ref, track, sim.s());
  tail.h = barrier_values(sim.state(), cfg.cbf);
  tail.label_delta = out.log.steps.empty() ? 0.0 : out.log.steps.back().label_delta;
  tail.label_v_target = out.log.steps.empty() ? 0.0 : out.log.steps.back().label_v_target;
  out.log.steps.push_back(tail);

  out.stats = lap_stats(out.log, cfg.cbf.lane_width, lap_len, iteration, cbf_enabled);
  out.stats.completed = completed && !failed;
  out.stats.lap_time = sim.time();
  return out;
}

LapStats lap_stats(const TrajectoryLog& log, double lane_width, double lap_length, int iteration,
                   bool cbf_enabled) {
  require(!log.steps.empty(), Errc::precondition, "empty trajectory log");
  (void)lap_length;
  LapStats st;
  st.iteration = iteration;
  st.cbf_enabled = cbf_enabled;
  st.steps = static_cast<int>(log.steps.size());
  double dev = 0.0;
  for (const auto& r : log.steps) {
    dev += std::abs(r.state.x_lat - r.ref_alpha);
    st.max_abs_xlat = std::max(st.max_abs_xlat, std::abs(r.state.x_lat));
    if (std::abs(r.state.x_lat) > 0.5 * lane_width) ++st.violation_steps;
  }
  st.mean_deviation = dev / static_cast<double>(log.steps.size());
  st.lap_time = log.steps.back().t;
  return st;
}

// ---------------------------------------------------------------------------
// experiment driver

namespace {

std::string arm_dir(const std::string& base, bool cbf_enabled) {
  return base + (cbf_enabled ? "/cbf_on" : "/cbf_off");
}

void write_manifest(const std::string& path, const ExperimentConfig& cfg, const TrackDef& track) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write " + path);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "track_length=%.6f\nlane_width=%.6f\ndt=%.6f\niterations=%d\nseed=%llu\n"
                "reference=%s\n",
                track.total_length(), cfg.cbf.lane_width, cfg.dt, cfg.n_iterations,
                static_cast<unsigned long long>(cfg.seed),
                cfg.reference == ReferenceMode::raceline ? "raceline" : "centerline");
  out << buf;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  RunContext ctx = make_run_context(cfg);
  ExperimentReport report;

  const bool want_files = !cfg.out_dir.empty();
  if (want_files) {
    std::filesystem::create_directories(cfg.out_dir);
    write_manifest(cfg.out_dir + "/run_info.txt", cfg, ctx.track);
    if (cfg.reference == ReferenceMode::raceline)
      save_raceline_csv(cfg.out_dir + "/raceline.csv", ctx.reference);
  }

  std::vector<bool> arms;
  if (cfg.arm == CbfArm::off || cfg.arm == CbfArm::both) arms.push_back(false);
  if (cfg.arm == CbfArm::on || cfg.arm == CbfArm::both) arms.push_back(true);

  for (bool cbf_enabled : arms) {
    Rng rng(mix_seed(cfg.seed, cbf_enabled ? 2 : 1));
    Dataset dataset;
    std::optional<Models> models;

    const std::string dir = arm_dir(cfg.out_dir, cbf_enabled);
    if (want_files && cfg.write_logs) std::filesystem::create_directories(dir);

    for (int iter = 0; iter < cfg.n_iterations; ++iter) {
      IterationResult res =
          run_iteration(ctx, models.has_value() ? &models.value() : nullptr, iter, cbf_enabled, rng);
      dataset.aggregate(res.new_records, iter);
      report.rows.push_back(res.stats);

      if (want_files && cfg.write_logs) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s/traj_%02d.csv", dir.c_str(), iter);
        write_traj_csv(name, res.log);
        std::snprintf(name, sizeof(name), "%s/plotdata_%02d.csv", dir.c_str(), iter);
        write_plotdata_csv(name, res.log, ctx.track);
      }

      if (iter + 1 < cfg.n_iterations) {
        // member identity persists across rounds; only the data grows
        models = fit(dataset, cfg.learner, mix_seed(cfg.seed, cbf_enabled ? 1000 : 2000));
      }
    }

    if (want_files) {
      dataset.save_csv(arm_dir(cfg.out_dir, cbf_enabled) + "_dataset.csv");
      if (cfg.save_models && models.has_value()) {
        models->com.save(arm_dir(cfg.out_dir, cbf_enabled) + "_model_com.txt");
        models->st.save(arm_dir(cfg.out_dir, cbf_enabled) + "_model_st.txt");
      }
    }
  }

  if (want_files) write_stats_csv(cfg.out_dir + "/stats.csv", report.rows);
  return report;
}

// ---------------------------------------------------------------------------
// csv output

void write_stats_csv(const std::string& path, const std::vector<LapStats>& rows) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write " + path);
  out << "iter,cbf,completed,lap_time,mean_deviation,max_abs_xlat,violation_steps,steps\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.6f,%.6f,%.6f,%d,%d\n", r.iteration,
                  r.cbf_enabled ? 1 : 0, r.completed ? 1 : 0, r.lap_time, r.mean_deviation,
                  r.max_abs_xlat, r.violation_steps, r.steps);
    out << buf;
  }
}

std::vector<LapStats> read_stats_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot read " + path);
  std::vector<LapStats> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LapStats r;
    int cbf = 0, done = 0;
    const int got = std::sscanf(line.c_str(), "%d,%d,%d,%lf,%lf,%lf,%d,%d", &r.iteration, &cbf,
                                &done, &r.lap_time, &r.mean_deviation, &r.max_abs_xlat,
                                &r.violation_steps, &r.steps);
    require(got == 8, Errc::io_error, "bad stats row: " + line);
    r.cbf_enabled = cbf != 0;
    r.completed = done != 0;
    rows.push_back(r);
  }
  return rows;
}

void write_traj_csv(const std::string& path, const TrajectoryLog& log) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write " + path);
  const int K = log.steps.empty() ? 0 : static_cast<int>(log.steps.front().obs.rays.size());
  out << "t,x,y,psi,s,x_lat,theta,omega,v,v_perp,c,ref_alpha";
  for (int k = 0; k < K; ++k) out << ",ray_" << k;
  out << ",label_delta,label_v_target,com_mu_delta,com_mu_vt,com_sd_delta,com_sd_vt"
         ",st_mu_xlat,st_mu_theta,st_mu_c,st_sd_xlat,st_sd_theta,st_sd_c"
         ",u_delta,u_ax,h_left,h_right,h_theta_left,h_theta_right,eps1,eps2,eps3,eps4,mpc_obj\n";
  char buf[96];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.6g", v);
    out << buf;
  };
  for (const auto& r : log.steps) {
    std::snprintf(buf, sizeof(buf), "%.4f", r.t);
    out << buf;
    put(r.pose.x);
    put(r.pose.y);
    put(r.pose.psi);
    put(r.s);
    put(r.state.x_lat);
    put(r.state.theta);
    put(r.state.omega);
    put(r.state.v);
    put(r.state.v_perp);
    put(r.state.c);
    put(r.ref_alpha);
    for (int k = 0; k < K; ++k)
      put(static_cast<int>(r.obs.rays.size()) > k ? r.obs.rays(k) : 0.0);
    put(r.label_delta);
    put(r.label_v_target);
    put(r.com_mean(0));
    put(r.com_mean(1));
    put(r.com_std(0));
    put(r.com_std(1));
    put(r.st_mean(0));
    put(r.st_mean(1));
    put(r.st_mean(2));
    put(r.st_std(0));
    put(r.st_std(1));
    put(r.st_std(2));
    put(r.applied.delta);
    put(r.applied.a_x);
    for (double h : r.h) put(h);
    for (double sl : r.slack) put(sl);
    put(r.mpc_objective);
    out << "\n";
  }
}

void write_plotdata_csv(const std::string& path, const TrajectoryLog& log, const TrackDef& track) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write " + path);
  out << "x,y,bx_left,by_left,bx_right,by_right\n";
  char buf[256];
  for (const auto& r : log.steps) {
    const Eigen::Vector2d p = track.position_at(r.s);
    const Eigen::Vector2d n = track.left_normal_at(r.s);
    const double w = track.half_width_at(r.s);
    const Eigen::Vector2d bl = p + w * n;
    const Eigen::Vector2d br = p - w * n;
    std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", r.pose.x, r.pose.y, bl.x(),
                  bl.y(), br.x(), br.y());
    out << buf;
  }
}

}  // namespace racer
