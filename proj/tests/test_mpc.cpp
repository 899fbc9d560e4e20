#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "racer/harness.hpp"
#include "racer/mpc.hpp"

using namespace racer;

namespace {

struct Fixture {
  TrackDef track = default_track();
  VehicleParams params;
  VelocityLimits limits;
  RacelineTrajectory rl;
  MPCConfig cfg;

  Fixture() { rl = build_raceline(track, 1.2, limits); }
};

FrenetPose pose_on_reference(const Fixture& fx, double s) {
  const std::size_t i =
      std::min(static_cast<std::size_t>(fx.track.wrap_s(s) / fx.track.spacing()),
               fx.rl.points.size() - 1);
  FrenetPose fr;
  fr.s = fx.track.s_at(i);
  fr.x_lat = fx.rl.points[i].alpha;
  fr.theta = wrap_angle(fx.rl.points[i].psi - fx.track.heading_at(fr.s));
  fr.c = fx.track.curvature_at(fr.s);
  return fr;
}

Eigen::VectorXd reference_state(const Fixture& fx, double s) {
  const FrenetPose fr = pose_on_reference(fx, s);
  const std::size_t i =
      std::min(static_cast<std::size_t>(fx.track.wrap_s(s) / fx.track.spacing()),
               fx.rl.points.size() - 1);
  Eigen::VectorXd x(6);
  x << fr.x_lat, fr.theta, fx.rl.points[i].v_x * fx.rl.points[i].kappa, fx.rl.points[i].v_x, 0.0,
      fr.c;
  return x;
}

}  // namespace

TEST_CASE("reference window spacing follows v dt along the raceline") {
  Fixture fx;
  const FrenetPose fr = pose_on_reference(fx, 5.0);
  const ReferenceWindow w =
      reference_states(fx.rl, fx.track, fr, fx.cfg, ModelKind::dynamic, fx.params);
  REQUIRE(static_cast<int>(w.x_ref.size()) == fx.cfg.N + 1);
  for (int k = 0; k + 1 <= fx.cfg.N; ++k) {
    double ds = w.s_raceline[static_cast<std::size_t>(k + 1)] - w.s_raceline[static_cast<std::size_t>(k)];
    if (ds < 0) ds += fx.rl.total_length;
    const double expect = w.v_ref[static_cast<std::size_t>(k)] * fx.cfg.dt;
    CHECK(ds == doctest::Approx(expect).epsilon(0.05));
  }
  // consecutive reference arc positions strictly increase modulo the lap
  for (int k = 0; k + 1 <= fx.cfg.N; ++k) {
    double ds = w.s_raceline[static_cast<std::size_t>(k + 1)] - w.s_raceline[static_cast<std::size_t>(k)];
    if (ds < 0) ds += fx.rl.total_length;
    CHECK(ds > 0.0);
  }
}

TEST_CASE("window on a straight section holds the raceline offset") {
  Fixture fx;
  // s = 2 lies on the opening straight of the default circuit
  const FrenetPose fr = pose_on_reference(fx, 2.0);
  const ReferenceWindow w =
      reference_states(fx.rl, fx.track, fr, fx.cfg, ModelKind::dynamic, fx.params);
  for (int k = 0; k < 5; ++k) {
    CHECK(std::abs(w.x_ref[static_cast<std::size_t>(k)](1)) < 0.1);  // theta small
  }
}

TEST_CASE("reference yaw rate matches v times curvature on a circle") {
  VehicleParams params;
  VelocityLimits limits;
  std::vector<TrackPoint> pts;
  for (int i = 0; i < 1256; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 1256;
    pts.push_back({20.0 * std::cos(a), 20.0 * std::sin(a), 2.0});
  }
  const TrackDef track = build_track(pts, true);
  const RacelineTrajectory rl = build_raceline(track, 0.5, limits);
  MPCConfig cfg;
  FrenetPose fr;
  fr.s = 40.0;
  fr.x_lat = rl.points[static_cast<std::size_t>(fr.s / track.spacing())].alpha;
  const ReferenceWindow w = reference_states(rl, track, fr, cfg, ModelKind::dynamic, params);
  for (int k = 0; k <= cfg.N; ++k) {
    const auto& x = w.x_ref[static_cast<std::size_t>(k)];
    const std::size_t i = std::min(static_cast<std::size_t>(w.s_track[static_cast<std::size_t>(k)] / track.spacing()),
                                   rl.points.size() - 1);
    CHECK(x(2) == doctest::Approx(x(3) * rl.points[i].kappa).epsilon(1e-3));
  }
}

TEST_CASE("on-reference solve returns the feed-forward control on a straight") {
  // flat-speed straight: the reference is an equilibrium, so the optimal
  // control equals the (zero) feed-forward
  VehicleParams params;
  VelocityLimits limits;
  limits.v_max = 8.0;
  std::vector<TrackPoint> pts;
  for (int i = 0; i <= 400; ++i) pts.push_back({0.5 * i, 0.0, 2.0});
  const TrackDef track = build_track(pts, false);
  const RacelineTrajectory rl = build_centerline_reference(track, limits);
  MPCConfig cfg;
  FrenetPose fr;
  fr.s = 50.0;
  const ReferenceWindow w = reference_states(rl, track, fr, cfg, ModelKind::dynamic, params);
  Eigen::VectorXd x0(6);
  x0 << 0.0, 0.0, 0.0, 8.0, 0.0, 0.0;
  const MPCResult res = mpc_solve(x0, w, params, cfg);
  CHECK(std::abs(res.u.delta - w.u_ff.front().delta) < 1e-4);
  CHECK(std::abs(res.u.a_x - w.u_ff.front().a_x) < 1e-4);
}

TEST_CASE("offset to the left steers right") {
  Fixture fx;
  const double s = 2.0;
  Eigen::VectorXd x0 = reference_state(fx, s);
  x0(0) += 0.5;  // half a meter left of the line
  const ReferenceWindow w = reference_states(fx.rl, fx.track, pose_on_reference(fx, s), fx.cfg,
                                             ModelKind::dynamic, fx.params);
  const MPCResult res = mpc_solve(x0, w, fx.params, fx.cfg);
  CHECK(res.u.delta < -1e-4);

  // and the predicted lateral error shrinks over the horizon
  const double e0 = std::abs(x0(0) - w.x_ref.front()(0));
  const double eN = std::abs(res.predicted.back()(0) - w.x_ref.back()(0));
  CHECK(eN < e0);
}

TEST_CASE("huge control weight drives the solution to zero") {
  Fixture fx;
  fx.cfg.weights.r_delta = 1e9;
  fx.cfg.weights.r_ax = 1e9;
  const double s = 2.0;
  const Eigen::VectorXd x0 = reference_state(fx, s);
  const ReferenceWindow w = reference_states(fx.rl, fx.track, pose_on_reference(fx, s), fx.cfg,
                                             ModelKind::dynamic, fx.params);
  const MPCResult res = mpc_solve(x0, w, fx.params, fx.cfg);
  CHECK(std::abs(res.u.delta) < 1e-5);
  CHECK(std::abs(res.u.a_x) < 1e-5);
}

TEST_CASE("controls respect actuator bounds under large errors") {
  Fixture fx;
  const double s = 2.0;
  Eigen::VectorXd x0 = reference_state(fx, s);
  x0(0) -= 1.8;
  x0(3) += 5.0;
  const ReferenceWindow w = reference_states(fx.rl, fx.track, pose_on_reference(fx, s), fx.cfg,
                                             ModelKind::dynamic, fx.params);
  const MPCResult res = mpc_solve(x0, w, fx.params, fx.cfg);
  for (const auto& u : res.sequence) {
    CHECK(std::abs(u.delta) <= fx.params.delta_max + 1e-12);
    CHECK(std::abs(u.a_x) <= fx.params.a_x_max + 1e-12);
  }
}

TEST_CASE("solver objective never exceeds the shifted warm start") {
  Fixture fx;
  Simulator sim(fx.track, fx.params, 0.02);
  sim.reset(0.0, fx.rl.points.front().alpha, 0.0, fx.rl.points.front().v_x);

  Eigen::VectorXd prev;
  bool have_prev = false;
  for (int step = 0; step < 40; ++step) {
    const FrenetPose fr = sim.frenet();
    const ReferenceWindow w =
        reference_states(fx.rl, fx.track, fr, fx.cfg, ModelKind::dynamic, fx.params);
    const Eigen::VectorXd x0 = to_vector(sim.state());
    const CondensedQP cqp = mpc_build_qp(x0, w, fx.params, fx.cfg);
    const MPCResult res = mpc_solve(x0, w, fx.params, fx.cfg);
    if (have_prev) {
      // shifted previous solution is feasible, so the optimum cannot be worse
      Eigen::VectorXd shifted(2 * fx.cfg.N);
      shifted.head(2 * (fx.cfg.N - 1)) = prev.tail(2 * (fx.cfg.N - 1));
      shifted.tail(2) = prev.tail(2);
      CHECK(cqp.cost(res.sequence.empty() ? shifted : [&] {
              Eigen::VectorXd u(2 * fx.cfg.N);
              for (int k = 0; k < fx.cfg.N; ++k) {
                u(2 * k) = res.sequence[static_cast<std::size_t>(k)].delta;
                u(2 * k + 1) = res.sequence[static_cast<std::size_t>(k)].a_x;
              }
              return u;
            }()) <= cqp.cost(shifted) + 1e-9 * std::max(1.0, std::abs(cqp.cost(shifted))));
    }
    prev.resize(2 * fx.cfg.N);
    for (int k = 0; k < fx.cfg.N; ++k) {
      prev(2 * k) = res.sequence[static_cast<std::size_t>(k)].delta;
      prev(2 * k + 1) = res.sequence[static_cast<std::size_t>(k)].a_x;
    }
    have_prev = true;
    sim.step(res.u);
  }
}

TEST_CASE("pid holds zero output at zero error") {
  PIDGains g;
  PIDState s;
  CHECK(pid_speed(10.0, 10.0, g, 0.02, s, 6.0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("pid proportional term") {
  PIDGains g;
  g.kp = 2.0;
  g.ki = 0.0;
  g.kd = 0.0;
  PIDState s;
  CHECK(pid_speed(11.0, 10.0, g, 0.02, s, 6.0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("pid closes the speed loop within two percent in five seconds") {
  VehicleParams p;
  PIDGains g;  // kp = 2, ki = 0.2
  PIDState pid;
  KinematicState s{0.0, 0.0, 5.0, 0.0};
  const double dt = 0.02;
  const double target = 9.0;
  for (int i = 0; i < static_cast<int>(5.0 / dt); ++i) {
    const double a = pid_speed(target, s.v, g, dt, pid, p.a_x_max);
    s = integrate(s, Control{0.0, a}, p, dt);
  }
  CHECK(std::abs(s.v - target) / target < 0.02);
}

TEST_CASE("pid output is clamped") {
  PIDGains g;
  g.kp = 100.0;
  PIDState s;
  CHECK(pid_speed(20.0, 0.0, g, 0.02, s, 6.0) == doctest::Approx(6.0));
}
