#include "racer/mpc.hpp"

#include <algorithm>
#include <cmath>

namespace racer {

void MPCConfig::validate() const {
  require(N >= 2, Errc::bad_config, "horizon must be at least 2");
  require(dt > 0 && dt <= 0.1, Errc::bad_config, "mpc step must lie in (0, 0.1]");
  const auto& w = weights;
  const bool q_ok = w.x_lat >= 0 && w.theta >= 0 && w.omega >= 0 && w.v >= 0 && w.v_perp >= 0 &&
                    w.c >= 0 && (w.x_lat + w.theta + w.omega + w.v + w.v_perp + w.c) > 0;
  require(q_ok, Errc::bad_config, "state weights must be nonnegative with at least one positive");
  require(w.r_delta >= 0 && w.r_ax >= 0 && (w.r_delta + w.r_ax) > 0, Errc::bad_config,
          "control weights must be nonnegative with at least one positive");
}

Eigen::VectorXd MPCConfig::q_diag(ModelKind kind) const {
  if (kind == ModelKind::kinematic) {
    Eigen::Vector4d q{weights.x_lat, weights.theta, weights.v, weights.c};
    return q;
  }
  Eigen::VectorXd q(6);
  q << weights.x_lat, weights.theta, weights.omega, weights.v, weights.v_perp, weights.c;
  return q;
}

Eigen::Vector2d MPCConfig::r_diag() const { return {weights.r_delta, weights.r_ax}; }

namespace {

struct RaceSample {
  double alpha, psi_rl, v, a_x, kappa_rl;
  double s_track, psi_c, c;
  double s_rl;
};

// interpolate the raceline and track at a fractional node index
RaceSample sample_at(const RacelineTrajectory& rl, const TrackDef& track, double idx) {
  const std::size_t n = rl.points.size();
  double w = idx;
  if (rl.closed) {
    w = std::fmod(w, static_cast<double>(n));
    if (w < 0) w += static_cast<double>(n);
  } else {
    w = std::clamp(w, 0.0, static_cast<double>(n - 1));
  }
  const std::size_t i = std::min(static_cast<std::size_t>(w), n - 1);
  const std::size_t j = (i + 1 < n) ? i + 1 : (rl.closed ? 0 : i);
  const double t = w - static_cast<double>(i);
  const auto& a = rl.points[i];
  const auto& b = rl.points[j];

  RaceSample out;
  out.alpha = a.alpha + t * (b.alpha - a.alpha);
  out.v = a.v_x + t * (b.v_x - a.v_x);
  out.a_x = a.a_x + t * (b.a_x - a.a_x);
  out.kappa_rl = a.kappa + t * (b.kappa - a.kappa);
  out.psi_rl = a.psi + t * wrap_angle(b.psi - a.psi);
  const double seg = (j == i) ? 0.0
                              : ((i + 1 == n) ? rl.total_length - a.s : b.s - a.s);
  out.s_rl = a.s + t * seg;
  out.s_track = track.wrap_s(track.spacing() * w);
  out.psi_c = track.heading_at(out.s_track);
  out.c = track.curvature_at(out.s_track);
  return out;
}

double raceline_seg_len(const RacelineTrajectory& rl, std::size_t i) {
  const std::size_t n = rl.points.size();
  if (i + 1 < n) return rl.points[i + 1].s - rl.points[i].s;
  return rl.closed ? rl.total_length - rl.points[i].s : 0.0;
}

}  // namespace

ReferenceWindow reference_states(const RacelineTrajectory& rl, const TrackDef& track,
                                 const FrenetPose& fr, const MPCConfig& cfg, ModelKind kind,
                                 const VehicleParams& p) {
  require(!rl.points.empty(), Errc::precondition, "empty raceline");
  require(rl.points.size() == track.size(), Errc::precondition,
          "raceline must be sampled on the track grid");

  const double K3 = 2.0 * (p.l_f * p.l_f * p.C_f + p.l_r * p.l_r * p.C_r) / p.Iz;
  const double K4 = 2.0 * p.l_f * p.C_f / p.Iz;

  ReferenceWindow w;
  w.kind = kind;

  // advance a fractional node index so raceline arc grows by v_ref * dt
  double idx = track.wrap_s(fr.s) / track.spacing();
  const std::size_t n = rl.points.size();
  if (!track.closed()) idx = std::min(idx, static_cast<double>(n - 1));

  for (int k = 0; k <= cfg.N; ++k) {
    const RaceSample smp = sample_at(rl, track, idx);
    Eigen::VectorXd x(state_dim(kind));
    const double theta_ref = wrap_angle(smp.psi_rl - smp.psi_c);
    if (kind == ModelKind::dynamic) {
      x << smp.alpha, theta_ref, smp.v * smp.kappa_rl, smp.v, 0.0, smp.c;
    } else {
      x << smp.alpha, theta_ref, smp.v, smp.c;
    }
    w.x_ref.push_back(x);
    w.s_track.push_back(smp.s_track);
    w.s_raceline.push_back(smp.s_rl);
    w.v_ref.push_back(smp.v);

    if (k < cfg.N) {
      // steady-state steer for the reference yaw rate, used as the
      // linearization control
      Control ff;
      if (kind == ModelKind::dynamic) {
        const double omega_ref = smp.v * smp.kappa_rl;
        ff.delta = std::clamp(K3 * omega_ref / (std::max(smp.v, p.v_min_dynamic) * K4),
                              -p.delta_max, p.delta_max);
      } else {
        ff.delta = std::asin(std::clamp(smp.kappa_rl * p.wheelbase, -0.99, 0.99));
      }
      ff.a_x = std::clamp(smp.a_x, -p.a_x_max, p.a_x_max);
      w.u_ff.push_back(ff);

      // step the index by the raceline arc advance
      const double adv = std::max(smp.v, 0.1) * cfg.dt;
      double remaining = adv;
      double cur = idx;
      while (remaining > 0) {
        const std::size_t i = std::min(static_cast<std::size_t>(cur), n - 1);
        const double seg = raceline_seg_len(rl, i);
        if (seg <= 1e-12) break;
        const double within = (cur - static_cast<double>(i)) * seg;
        const double left = seg - within;
        if (remaining < left) {
          cur += remaining / seg;
          remaining = 0;
        } else {
          remaining -= left;
          cur = static_cast<double>(i + 1);
          if (rl.closed && cur >= static_cast<double>(n)) cur -= static_cast<double>(n);
          if (!rl.closed && i + 1 >= n - 1) {
            cur = static_cast<double>(n - 1);
            break;
          }
        }
      }
      idx = cur;
    }
  }
  return w;
}

CondensedQP mpc_build_qp(const Eigen::VectorXd& x0, const ReferenceWindow& window,
                         const VehicleParams& p, const MPCConfig& cfg) {
  cfg.validate();
  const int N = cfg.N;
  const int nx = state_dim(window.kind);
  const int nu = 2;
  require(static_cast<int>(window.x_ref.size()) == N + 1, Errc::precondition,
          "window does not match the horizon");
  require(x0.size() == nx, Errc::precondition, "state dimension mismatch");

  const Eigen::VectorXd q = cfg.q_diag(window.kind);
  const Eigen::Vector2d r = cfg.r_diag();

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nu * N, nu * N);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(nu * N);
  double constant = 0.0;

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(nx, nu * N);  // d x_k / d U
  Eigen::VectorXd base = x0;                              // x_k at U = 0

  for (int k = 0; k < N; ++k) {
    // linearize along the reference
    const Control uff = window.u_ff[static_cast<std::size_t>(k)];
    const Discretization d =
        linearize(window.kind, window.x_ref[static_cast<std::size_t>(k)], uff, p, cfg.dt);
    base = d.A * base + d.C;
    S = d.A * S;
    S.block(0, nu * k, nx, nu) += d.B;

    const Eigen::VectorXd wq =
        (k == N - 1) ? (cfg.weights.terminal_scale * q).eval() : q;
    const Eigen::VectorXd err = base - window.x_ref[static_cast<std::size_t>(k + 1)];
    // accumulate (S U + err)' diag(wq) (S U + err)
    const Eigen::MatrixXd WS = wq.asDiagonal() * S;
    H += 2.0 * S.transpose() * WS;
    g += 2.0 * WS.transpose() * err;
    constant += err.dot(wq.asDiagonal() * err);

    H.block(nu * k, nu * k, nu, nu) += 2.0 * r.asDiagonal().toDenseMatrix();
  }

  CondensedQP out;
  out.problem.H = 0.5 * (H + H.transpose());
  out.problem.f = g;
  out.constant = constant;

  // actuator box bounds
  out.problem.A_in.resize(4 * N, nu * N);
  out.problem.A_in.setZero();
  out.problem.b_in.resize(4 * N);
  for (int k = 0; k < N; ++k) {
    out.problem.A_in(4 * k + 0, nu * k + 0) = 1.0;
    out.problem.b_in(4 * k + 0) = p.delta_max;
    out.problem.A_in(4 * k + 1, nu * k + 0) = -1.0;
    out.problem.b_in(4 * k + 1) = p.delta_max;
    out.problem.A_in(4 * k + 2, nu * k + 1) = 1.0;
    out.problem.b_in(4 * k + 2) = p.a_x_max;
    out.problem.A_in(4 * k + 3, nu * k + 1) = -1.0;
    out.problem.b_in(4 * k + 3) = p.a_x_max;
  }
  out.problem.A_eq.resize(0, nu * N);
  out.problem.b_eq.resize(0);
  return out;
}

MPCResult mpc_solve(const Eigen::VectorXd& x0, const ReferenceWindow& window,
                    const VehicleParams& p, const MPCConfig& cfg) {
  const CondensedQP cqp = mpc_build_qp(x0, window, p, cfg);
  const qp::QPSolution sol = qp::solve(cqp.problem);
  if (sol.status != qp::QPStatus::optimal)
    fail(Errc::qp_failure, std::string("mpc QP: ") + qp::to_string(sol.status));

  MPCResult res;
  res.status = sol.status;
  res.qp_objective = cqp.cost(sol.u_star);
  const int N = cfg.N;
  res.sequence.resize(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) {
    Control u;
    u.delta = std::clamp(sol.u_star(2 * k + 0), -p.delta_max, p.delta_max);
    u.a_x = std::clamp(sol.u_star(2 * k + 1), -p.a_x_max, p.a_x_max);
    res.sequence[static_cast<std::size_t>(k)] = u;
  }
  res.u = res.sequence.front();

  // predicted states for logging
  Eigen::VectorXd x = x0;
  res.predicted.push_back(x);
  for (int k = 0; k < N; ++k) {
    const Discretization d = linearize(window.kind, window.x_ref[static_cast<std::size_t>(k)],
                                       window.u_ff[static_cast<std::size_t>(k)], p, cfg.dt);
    const Control u = res.sequence[static_cast<std::size_t>(k)];
    x = d.A * x + d.B * Eigen::Vector2d{u.delta, u.a_x} + d.C;
    res.predicted.push_back(x);
  }
  return res;
}

double PIDState::preview(double err, const PIDGains& g, double dt, double a_max) const {
  const double i = std::clamp(integral_ + err * dt, -g.integral_limit, g.integral_limit);
  const double d = has_prev_ ? (err - prev_err_) / dt : 0.0;
  return std::clamp(g.kp * err + g.ki * i + g.kd * d, -a_max, a_max);
}

double PIDState::step(double err, const PIDGains& g, double dt, double a_max) {
  integral_ = std::clamp(integral_ + err * dt, -g.integral_limit, g.integral_limit);
  const double d = has_prev_ ? (err - prev_err_) / dt : 0.0;
  prev_err_ = err;
  has_prev_ = true;
  return std::clamp(g.kp * err + g.ki * integral_ + g.kd * d, -a_max, a_max);
}

double pid_speed(double v_target, double v, const PIDGains& gains, double dt, PIDState& state,
                 double a_max) {
  require(dt > 0, Errc::precondition, "pid step must be positive");
  return state.step(v_target - v, gains, dt, a_max);
}

}  // namespace racer
