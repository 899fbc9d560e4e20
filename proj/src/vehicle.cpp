#include "racer/vehicle.hpp"

#include <cmath>

namespace racer {

void VehicleParams::validate() const {
  require(m > 0 && Iz > 0 && l_f > 0 && l_r > 0 && C_f > 0 && C_r > 0, Errc::bad_config,
          "vehicle masses, inertias, stiffnesses and lengths must be positive");
  require(std::abs(wheelbase - (l_f + l_r)) <= 1e-9, Errc::bad_config,
          "wheelbase must equal l_f + l_r");
  require(delta_max > 0 && a_x_max > 0 && v_min_dynamic > 0, Errc::bad_config,
          "actuator and speed limits must be positive");
}

Eigen::Vector4d to_vector(const KinematicState& s) {
  return Eigen::Vector4d{s.x_lat, s.theta, s.v, s.c};
}

Eigen::Matrix<double, 6, 1> to_vector(const DynamicState& s) {
  Eigen::Matrix<double, 6, 1> v;
  v << s.x_lat, s.theta, s.omega, s.v, s.v_perp, s.c;
  return v;
}

KinematicState kinematic_from_vector(const Eigen::VectorXd& v) {
  return KinematicState{v(0), v(1), v(2), v(3)};
}

DynamicState dynamic_from_vector(const Eigen::VectorXd& v) {
  return DynamicState{v(0), v(1), v(2), v(3), v(4), v(5)};
}

KinematicState kinematic_derivative(const KinematicState& s, const Control& u,
                                    const VehicleParams& p) {
  KinematicState d;
  d.x_lat = s.v * std::sin(s.theta);
  d.theta = s.v * std::sin(u.delta) / p.wheelbase - s.v * s.c;
  d.v = u.a_x;
  d.c = 0.0;
  return d;
}

DynamicState dynamic_derivative(const DynamicState& s, const Control& u, const VehicleParams& p) {
  require(s.v >= p.v_min_dynamic, Errc::below_speed_floor,
          "dynamic model invalid at v = " + std::to_string(s.v));
  DynamicState d;
  d.x_lat = s.v * std::sin(s.theta) + s.v_perp * std::cos(s.theta);
  d.theta = s.omega - s.v * s.c;
  d.omega = -2.0 * (p.l_f * p.l_f * p.C_f + p.l_r * p.l_r * p.C_r) / (p.Iz * s.v) * s.omega +
            2.0 * p.l_f * p.C_f / p.Iz * u.delta;
  d.v = u.a_x;
  d.v_perp = -2.0 * (p.C_f + p.C_r) / (p.m * s.v) * s.v_perp;
  d.c = 0.0;
  return d;
}

namespace {

void check_dt(double dt) {
  require(dt > 0.0 && dt <= 0.1, Errc::precondition,
          "integration step must lie in (0, 0.1], got " + std::to_string(dt));
}

template <typename State>
State axpy(const State& s, const State& d, double h);

template <>
KinematicState axpy(const KinematicState& s, const KinematicState& d, double h) {
  return {s.x_lat + h * d.x_lat, s.theta + h * d.theta, s.v + h * d.v, s.c + h * d.c};
}

template <>
DynamicState axpy(const DynamicState& s, const DynamicState& d, double h) {
  return {s.x_lat + h * d.x_lat, s.theta + h * d.theta, s.omega + h * d.omega,
          s.v + h * d.v,         s.v_perp + h * d.v_perp, s.c + h * d.c};
}

template <typename State, typename Deriv>
State rk4(const State& s, const Control& u, const VehicleParams& p, double dt, Deriv f) {
  const State k1 = f(s, u, p);
  const State k2 = f(axpy(s, k1, 0.5 * dt), u, p);
  const State k3 = f(axpy(s, k2, 0.5 * dt), u, p);
  const State k4 = f(axpy(s, k3, dt), u, p);
  State out = s;
  out = axpy(out, k1, dt / 6.0);
  out = axpy(out, k2, dt / 3.0);
  out = axpy(out, k3, dt / 3.0);
  out = axpy(out, k4, dt / 6.0);
  return out;
}

}  // namespace

KinematicState integrate(const KinematicState& s, const Control& u, const VehicleParams& p,
                         double dt) {
  check_dt(dt);
  return rk4(s, u, p, dt,
             [](const KinematicState& x, const Control& c, const VehicleParams& pp) {
               return kinematic_derivative(x, c, pp);
             });
}

DynamicState integrate(const DynamicState& s, const Control& u, const VehicleParams& p,
                       double dt) {
  check_dt(dt);
  return rk4(s, u, p, dt, [](const DynamicState& x, const Control& c, const VehicleParams& pp) {
    return dynamic_derivative(x, c, pp);
  });
}

Jacobians jacobians(const KinematicState& s, const Control& u, const VehicleParams& p) {
  Jacobians j;
  j.J_x = Eigen::MatrixXd::Zero(4, 4);
  j.J_u = Eigen::MatrixXd::Zero(4, 2);
  // rows: x_lat, theta, v, c
  j.J_x(0, 1) = s.v * std::cos(s.theta);
  j.J_x(0, 2) = std::sin(s.theta);
  j.J_x(1, 2) = std::sin(u.delta) / p.wheelbase - s.c;
  j.J_x(1, 3) = -s.v;
  j.J_u(1, 0) = s.v * std::cos(u.delta) / p.wheelbase;
  j.J_u(2, 1) = 1.0;
  return j;
}

Jacobians jacobians(const DynamicState& s, const Control& u, const VehicleParams& p) {
  (void)u;
  require(s.v >= p.v_min_dynamic, Errc::below_speed_floor,
          "dynamic model invalid at v = " + std::to_string(s.v));
  const double K3 = 2.0 * (p.l_f * p.l_f * p.C_f + p.l_r * p.l_r * p.C_r) / p.Iz;
  const double K4 = 2.0 * p.l_f * p.C_f / p.Iz;
  const double K5 = 2.0 * (p.C_f + p.C_r) / p.m;
  const double sth = std::sin(s.theta);
  const double cth = std::cos(s.theta);
  Jacobians j;
  j.J_x = Eigen::MatrixXd::Zero(6, 6);
  j.J_u = Eigen::MatrixXd::Zero(6, 2);
  // rows: x_lat, theta, omega, v, v_perp, c
  j.J_x(0, 1) = s.v * cth - s.v_perp * sth;
  j.J_x(0, 3) = sth;
  j.J_x(0, 4) = cth;
  j.J_x(1, 2) = 1.0;
  j.J_x(1, 3) = -s.c;
  j.J_x(1, 5) = -s.v;
  j.J_x(2, 2) = -K3 / s.v;
  j.J_x(2, 3) = K3 * s.omega / (s.v * s.v);
  j.J_x(4, 3) = K5 * s.v_perp / (s.v * s.v);
  j.J_x(4, 4) = -K5 / s.v;
  j.J_u(2, 0) = K4;
  j.J_u(3, 1) = 1.0;
  return j;
}

namespace {

template <typename State>
Discretization discretize(const State& s, const Control& u, const VehicleParams& p, double dt,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& f) {
  const Jacobians j = jacobians(s, u, p);
  Discretization d;
  const int n = static_cast<int>(x.size());
  d.A = Eigen::MatrixXd::Identity(n, n) + dt * j.J_x;
  d.B = dt * j.J_u;
  d.C = dt * (f - j.J_x * x - j.J_u * Eigen::Vector2d{u.delta, u.a_x});
  return d;
}

}  // namespace

Discretization linearize(const KinematicState& s, const Control& u, const VehicleParams& p,
                         double dt) {
  check_dt(dt);
  return discretize(s, u, p, dt, to_vector(s), to_vector(kinematic_derivative(s, u, p)));
}

Discretization linearize(const DynamicState& s, const Control& u, const VehicleParams& p,
                         double dt) {
  check_dt(dt);
  return discretize(s, u, p, dt, to_vector(s), to_vector(dynamic_derivative(s, u, p)));
}

Discretization linearize(ModelKind kind, const Eigen::VectorXd& x, const Control& u,
                         const VehicleParams& p, double dt) {
  if (kind == ModelKind::kinematic) return linearize(kinematic_from_vector(x), u, p, dt);
  return linearize(dynamic_from_vector(x), u, p, dt);
}

Eigen::VectorXd derivative(ModelKind kind, const Eigen::VectorXd& x, const Control& u,
                           const VehicleParams& p) {
  if (kind == ModelKind::kinematic)
    return to_vector(kinematic_derivative(kinematic_from_vector(x), u, p));
  return to_vector(dynamic_derivative(dynamic_from_vector(x), u, p));
}

}  // namespace racer
