#pragma once

#include <optional>
#include <string>
#include <vector>

#include "racer/cbf.hpp"
#include "racer/learner.hpp"
#include "racer/mpc.hpp"
#include "racer/raceline.hpp"
#include "racer/rng.hpp"
#include "racer/track.hpp"
#include "racer/vehicle.hpp"

namespace racer {

enum class ReferenceMode { centerline, raceline };
enum class CbfArm { off, on, both };
enum class BeliefSource { model, ground_truth };

struct NoiseModel {
  double x_lat = 0.0;
  double theta = 0.0;
  double c = 0.0;

  bool any() const { return x_lat > 0 || theta > 0 || c > 0; }
};

struct ExperimentConfig {
  std::string track_file;  // empty: built-in circuit
  bool track_closed = true;
  ReferenceMode reference = ReferenceMode::raceline;
  CbfArm arm = CbfArm::both;
  BeliefSource belief = BeliefSource::model;
  NoiseModel noise;

  VehicleParams vehicle;
  MPCConfig mpc;
  CBFParams cbf;
  PIDGains pid;
  LearnerConfig learner;
  VelocityLimits limits;
  double w_veh = 1.2;

  int n_iterations = 12;
  int steps_per_lap = 2500;
  double dt = 0.02;
  std::uint64_t seed = 1;

  std::string out_dir;
  bool write_logs = true;
  bool save_models = false;

  void validate() const;
};

struct LapStats {
  int iteration = 0;
  bool cbf_enabled = false;
  bool completed = false;
  double lap_time = 0.0;  // completion time, or time of failure / cap
  double mean_deviation = 0.0;
  double max_abs_xlat = 0.0;
  int violation_steps = 0;
  int steps = 0;
};

struct StepRecord {
  double t = 0.0;
  GlobalPose pose;
  double s = 0.0;
  DynamicState state;       // omega / v_perp zero in kinematic mode
  double ref_alpha = 0.0;   // reference offset at this arc position
  Observation obs;
  double label_delta = 0.0;
  double label_v_target = 0.0;
  Eigen::Vector2d com_mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d com_std = Eigen::Vector2d::Zero();
  Eigen::Vector3d st_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d st_std = Eigen::Vector3d::Zero();
  Control applied;
  std::array<double, 4> h{};
  std::array<double, 4> slack{};
  double mpc_objective = 0.0;
};

struct TrajectoryLog {
  double dt = 0.0;
  std::vector<StepRecord> steps;
};

// Track-frame vehicle stepper: integrates the active model together with the
// arc-length coordinate, refreshing the local curvature from the track after
// every step and switching to the no-slip model below the speed floor.
class Simulator {
 public:
  Simulator(const TrackDef& track, const VehicleParams& params, double dt);

  void reset(double s, double x_lat, double theta, double v, double omega = 0.0,
             double v_perp = 0.0);
  void step(const Control& u);

  const DynamicState& state() const { return state_; }
  double s() const { return s_; }
  double progress() const { return progress_; }
  double time() const { return t_; }
  bool kinematic_mode() const { return kinematic_; }
  GlobalPose global_pose() const;
  FrenetPose frenet() const;

 private:
  const TrackDef& track_;
  VehicleParams params_;
  double dt_;
  DynamicState state_;
  double s_ = 0.0;
  double progress_ = 0.0;
  double t_ = 0.0;
  bool kinematic_ = false;
};

struct IterationResult {
  TrajectoryLog log;
  LapStats stats;
  std::vector<DataRecord> new_records;
  std::string failure;  // what ended the episode, empty when clean
};

struct RunContext {
  ExperimentConfig cfg;
  TrackDef track;
  RacelineTrajectory reference;
};

RunContext make_run_context(const ExperimentConfig& cfg);

// One closed-loop episode: the expert drives on round 0; later rounds are
// driven by the learner (optionally behind the safety filter) while the
// expert runs shadow-mode to produce labels.
IterationResult run_iteration(const RunContext& ctx, const Models* models, int iteration,
                              bool cbf_enabled, Rng& rng);

LapStats lap_stats(const TrajectoryLog& log, double lane_width, double lap_length, int iteration,
                   bool cbf_enabled);

struct ExperimentReport {
  std::vector<LapStats> rows;  // grouped per arm, iteration ascending
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

// built-in closed test circuits
std::vector<TrackPoint> default_track_points();
std::vector<TrackPoint> small_track_points();
TrackDef default_track();

// key = value configuration file
ExperimentConfig load_config(const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value);

void write_stats_csv(const std::string& path, const std::vector<LapStats>& rows);
std::vector<LapStats> read_stats_csv(const std::string& path);
void write_traj_csv(const std::string& path, const TrajectoryLog& log);
void write_plotdata_csv(const std::string& path, const TrajectoryLog& log, const TrackDef& track);

}  // namespace racer
