#pragma once

#include <vector>

#include "racer/qp.hpp"
#include "racer/raceline.hpp"
#include "racer/track.hpp"
#include "racer/vehicle.hpp"

namespace racer {

struct MPCWeights {
  double x_lat = 10.0;
  double theta = 5.0;
  double omega = 0.1;
  double v = 1.0;
  double v_perp = 0.1;
  double c = 0.0;
  double r_delta = 5.0;
  double r_ax = 0.5;
  double terminal_scale = 5.0;
};

struct MPCConfig {
  int N = 20;
  double dt = 0.05;
  MPCWeights weights;

  void validate() const;
  Eigen::VectorXd q_diag(ModelKind kind) const;
  Eigen::Vector2d r_diag() const;
};

struct ReferenceWindow {
  ModelKind kind = ModelKind::dynamic;
  std::vector<Eigen::VectorXd> x_ref;  // N+1 states
  std::vector<Control> u_ff;           // N linearization controls
  std::vector<double> s_track;         // centerline arc per sample
  std::vector<double> s_raceline;      // raceline arc per sample
  std::vector<double> v_ref;           // profile speed per sample
};

// N+1 reference states sampled ahead of the vehicle along the raceline at
// arc spacing v_ref * dt.
ReferenceWindow reference_states(const RacelineTrajectory& rl, const TrackDef& track,
                                 const FrenetPose& fr, const MPCConfig& cfg, ModelKind kind,
                                 const VehicleParams& p);

struct CondensedQP {
  qp::QPProblem problem;
  double constant = 0.0;  // objective offset so values match the tracking cost

  double cost(const Eigen::VectorXd& u_seq) const {
    return qp::objective(problem, u_seq) + constant;
  }
};

CondensedQP mpc_build_qp(const Eigen::VectorXd& x0, const ReferenceWindow& window,
                         const VehicleParams& p, const MPCConfig& cfg);

struct MPCResult {
  Control u;
  std::vector<Control> sequence;
  std::vector<Eigen::VectorXd> predicted;
  double qp_objective = 0.0;
  qp::QPStatus status = qp::QPStatus::max_iter;
};

MPCResult mpc_solve(const Eigen::VectorXd& x0, const ReferenceWindow& window,
                    const VehicleParams& p, const MPCConfig& cfg);

struct PIDGains {
  double kp = 2.0;
  double ki = 0.2;
  double kd = 0.0;
  double integral_limit = 2.0;
};

class PIDState {
 public:
  void reset() {
    integral_ = 0.0;
    has_prev_ = false;
    prev_err_ = 0.0;
  }
  // output for an error without advancing the integrator
  double preview(double err, const PIDGains& g, double dt, double a_max) const;
  // advance and return the command
  double step(double err, const PIDGains& g, double dt, double a_max);

 private:
  double integral_ = 0.0;
  double prev_err_ = 0.0;
  bool has_prev_ = false;
};

double pid_speed(double v_target, double v, const PIDGains& gains, double dt, PIDState& state,
                 double a_max);

}  // namespace racer
