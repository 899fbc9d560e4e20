#include "racer/cbf.hpp"

#include <cmath>
#include <numbers>

namespace racer {

void CBFParams::validate() const {
  require(lane_width > 0, Errc::bad_config, "lane width must be positive");
  require(lambda > 0, Errc::bad_config, "barrier gain must be positive");
  require(eta > 0.5 && eta < 1.0, Errc::bad_config, "confidence must lie in (0.5, 1)");
  require(theta_max > 0 && theta_max < 0.5 * std::numbers::pi, Errc::bad_config,
          "heading bound must lie in (0, pi/2)");
  require(k_err > 0, Errc::bad_config, "slack penalty must be positive");
  require(n_rollouts >= 2, Errc::bad_config, "need at least 2 rollouts");
  require(sigma_min > 0, Errc::bad_config, "sigma floor must be positive");
}

GaussianBelief GaussianBelief::from_samples(const Eigen::MatrixXd& samples) {
  require(samples.rows() >= 1, Errc::precondition, "belief needs at least one sample");
  GaussianBelief b;
  b.samples = samples;
  const double n = static_cast<double>(samples.rows());
  b.mean = samples.colwise().mean();
  Eigen::MatrixXd centered = samples.rowwise() - b.mean.transpose();
  b.stddev = (centered.array().square().colwise().sum() / n).sqrt().matrix().transpose();
  return b;
}

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, Errc::precondition, "quantile argument must lie in (0, 1)");
  const double pp = p < 0.5 ? p : 1.0 - p;
  const double t = std::sqrt(-2.0 * std::log(pp));
  // rational tail approximation, then Newton through erfc
  double x = t - (2.515517 + t * (0.802853 + t * 0.010328)) /
                     (1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308)));
  if (p < 0.5) x = -x;
  for (int it = 0; it < 3; ++it) {
    const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    if (pdf < 1e-300) break;
    x -= (cdf - p) / pdf;
  }
  return x;
}

std::array<double, 4> barrier_values(const DynamicState& s, const CBFParams& cp) {
  const double half = 0.5 * cp.lane_width;
  return {half - s.x_lat, half + s.x_lat, cp.theta_max - s.theta, cp.theta_max + s.theta};
}

namespace {

// affine-in-U scalar: value = c0 + cd * delta + ca * a_x
struct AffineScalar {
  double c0 = 0.0, cd = 0.0, ca = 0.0;
};

// constraint "expr >= 0" as a row a * U <= b
AffineConstraint row_from_expr(const AffineScalar& e, BarrierLabel label) {
  AffineConstraint r;
  r.a = Eigen::Vector2d{-e.cd, -e.ca};
  r.b = e.c0;
  r.label = label;
  return r;
}

}  // namespace

std::pair<AffineConstraint, AffineConstraint> lane_cbf_rows(const DynamicState& s,
                                                            const VehicleParams& p,
                                                            const CBFParams& cp) {
  require(s.v >= p.v_min_dynamic, Errc::below_speed_floor,
          "lane rows invalid at v = " + std::to_string(s.v));

  const double K3 = 2.0 * (p.l_f * p.l_f * p.C_f + p.l_r * p.l_r * p.C_r) / p.Iz;
  const double K4 = 2.0 * p.l_f * p.C_f / p.Iz;
  const double K5 = 2.0 * (p.C_f + p.C_r) / p.m;

  const double sth = std::sin(s.theta);
  const double cth = std::cos(s.theta);
  const double v2 = s.v * s.v;

  const double xdot = s.v * sth + s.v_perp * cth;
  const double thdot = s.omega - s.v * s.c;
  const double vperp_dot = -K5 * s.v_perp / s.v;
  const double F = s.v * cth - s.v_perp * sth;  // d/dtheta of xdot

  // second derivative of the lateral offset; a_x enters through the speed
  AffineScalar x2;
  x2.c0 = vperp_dot * cth + thdot * F;
  x2.ca = sth;

  // third derivative along the model flow with U held and curvature frozen;
  // includes the theta-rate cross terms of the product rule
  AffineScalar x3;
  x3.cd = K4 * F;
  x3.ca = 2.0 * thdot * cth - s.c * F + K5 * s.v_perp * cth / v2;
  x3.c0 = -K5 * vperp_dot * cth / s.v - 2.0 * vperp_dot * thdot * sth - K3 * s.omega * F / s.v -
          thdot * thdot * xdot;

  const double lam = cp.lambda;
  const double half = 0.5 * cp.lane_width;

  AffineScalar left;  // -x''' - 3 lam x'' - 3 lam^2 x' + lam^3 (L/2 - x) >= 0
  left.c0 = -x3.c0 - 3.0 * lam * x2.c0 - 3.0 * lam * lam * xdot + lam * lam * lam * (half - s.x_lat);
  left.cd = -x3.cd;
  left.ca = -(x3.ca + 3.0 * lam * x2.ca);

  AffineScalar right;  // x''' + 3 lam x'' + 3 lam^2 x' + lam^3 (L/2 + x) >= 0
  right.c0 = x3.c0 + 3.0 * lam * x2.c0 + 3.0 * lam * lam * xdot + lam * lam * lam * (half + s.x_lat);
  right.cd = x3.cd;
  right.ca = x3.ca + 3.0 * lam * x2.ca;

  return {row_from_expr(left, BarrierLabel::left), row_from_expr(right, BarrierLabel::right)};
}

std::pair<AffineConstraint, AffineConstraint> heading_cbf_rows(const DynamicState& s,
                                                               const VehicleParams& p,
                                                               const CBFParams& cp) {
  require(s.v >= p.v_min_dynamic, Errc::below_speed_floor,
          "heading rows invalid at v = " + std::to_string(s.v));

  const double K3 = 2.0 * (p.l_f * p.l_f * p.C_f + p.l_r * p.l_r * p.C_r) / p.Iz;
  const double K4 = 2.0 * p.l_f * p.C_f / p.Iz;
  const double lam = cp.lambda;
  const double thdot = s.omega - s.v * s.c;

  // theta'' = omega_dot - a_x c with the curvature frozen
  AffineScalar right;  // barrier theta_max + theta
  right.cd = K4;
  right.ca = -s.c;
  right.c0 = -K3 * s.omega / s.v + 2.0 * lam * thdot + lam * lam * (cp.theta_max + s.theta);

  AffineScalar left;  // barrier theta_max - theta
  left.cd = -K4;
  left.ca = s.c;
  left.c0 = K3 * s.omega / s.v - 2.0 * lam * thdot + lam * lam * (cp.theta_max - s.theta);

  return {row_from_expr(left, BarrierLabel::theta_left),
          row_from_expr(right, BarrierLabel::theta_right)};
}

std::array<AffineConstraint, 4> kinematic_cbf_rows(const KinematicState& s,
                                                   const VehicleParams& p, const CBFParams& cp) {
  const double sth = std::sin(s.theta);
  const double cth = std::cos(s.theta);
  const double lam = cp.lambda;
  const double half = 0.5 * cp.lane_width;
  const double v2 = s.v * s.v;

  // small steering angles: sin(delta) ~ delta keeps the rows affine in U
  const double xdot = s.v * sth;
  AffineScalar x2;  // x'' = a_x sin(theta) + v cos(theta) (v delta / L - v c)
  x2.c0 = -v2 * s.c * cth;
  x2.cd = v2 * cth / p.wheelbase;
  x2.ca = sth;

  AffineScalar left;  // -x'' - 2 lam x' + lam^2 (L/2 - x) >= 0
  left.c0 = -x2.c0 - 2.0 * lam * xdot + lam * lam * (half - s.x_lat);
  left.cd = -x2.cd;
  left.ca = -x2.ca;

  AffineScalar right;
  right.c0 = x2.c0 + 2.0 * lam * xdot + lam * lam * (half + s.x_lat);
  right.cd = x2.cd;
  right.ca = x2.ca;

  // theta' = v delta / L - v c, relative degree 1
  AffineScalar tright;  // theta' + lam (theta_max + theta) >= 0
  tright.cd = s.v / p.wheelbase;
  tright.c0 = -s.v * s.c + lam * (cp.theta_max + s.theta);

  AffineScalar tleft;  // -theta' + lam (theta_max - theta) >= 0
  tleft.cd = -s.v / p.wheelbase;
  tleft.c0 = s.v * s.c + lam * (cp.theta_max - s.theta);

  return {row_from_expr(left, BarrierLabel::left), row_from_expr(right, BarrierLabel::right),
          row_from_expr(tleft, BarrierLabel::theta_left),
          row_from_expr(tright, BarrierLabel::theta_right)};
}

TightenedRow chance_tighten(const std::vector<AffineConstraint>& sampled, double eta,
                            const Eigen::Vector2d& u_lin) {
  require(!sampled.empty(), Errc::precondition, "no sampled rows");
  require(eta > 0.5 && eta < 1.0, Errc::precondition, "eta must lie in (0.5, 1)");

  const double n = static_cast<double>(sampled.size());
  Eigen::Vector2d a_mean = Eigen::Vector2d::Zero();
  double b_mean = 0.0;
  for (const auto& r : sampled) {
    a_mean += r.a;
    b_mean += r.b;
  }
  a_mean /= n;
  b_mean /= n;

  Eigen::Vector2d a_var = Eigen::Vector2d::Zero();
  double b_var = 0.0;
  for (const auto& r : sampled) {
    a_var += (r.a - a_mean).cwiseAbs2();
    b_var += (r.b - b_mean) * (r.b - b_mean);
  }
  a_var /= n;
  b_var /= n;

  TightenedRow t;
  t.row.a = a_mean;
  t.row.label = sampled.front().label;
  t.degenerate = a_var.maxCoeff() < 1e-24 && b_var < 1e-24;
  const double z = normal_quantile(eta);
  t.margin = z * std::sqrt(a_var.dot(u_lin.cwiseAbs2()) + b_var);
  t.row.b = b_mean - t.margin;
  return t;
}

FilterResult safety_filter(const GaussianBelief& u_ref, const GaussianBelief& state_belief,
                           const VehicleParams& p, const CBFParams& cp) {
  cp.validate();
  require(u_ref.dim() == 2, Errc::precondition, "control belief must be 2-dimensional");
  const int dim = state_belief.dim();
  require(dim == 6 || dim == 4, Errc::precondition, "state belief must be dynamic or kinematic");
  const int n = state_belief.count();
  require(n >= 1, Errc::precondition, "state belief has no samples");

  const bool kinematic = (dim == 4);

  std::array<std::vector<AffineConstraint>, 4> per_label;
  for (auto& v : per_label) v.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd row = state_belief.samples.row(i).transpose();
    if (kinematic) {
      const auto rows = kinematic_cbf_rows(kinematic_from_vector(row), p, cp);
      per_label[0].push_back(rows[0]);
      per_label[1].push_back(rows[1]);
      per_label[2].push_back(rows[2]);
      per_label[3].push_back(rows[3]);
    } else {
      const DynamicState st = dynamic_from_vector(row);
      const auto lane = lane_cbf_rows(st, p, cp);
      const auto head = heading_cbf_rows(st, p, cp);
      per_label[0].push_back(lane.first);
      per_label[1].push_back(lane.second);
      per_label[2].push_back(head.first);
      per_label[3].push_back(head.second);
    }
  }

  const Eigen::Vector2d sd = u_ref.stddev.cwiseMax(cp.sigma_min);
  const Eigen::Vector2d inv_var = sd.cwiseAbs2().cwiseInverse();
  const Eigen::Vector2d u_mu{u_ref.mean(0), u_ref.mean(1)};

  qp::QPProblem prob;
  prob.H = Eigen::MatrixXd::Zero(6, 6);
  prob.H(0, 0) = 2.0 * inv_var(0);
  prob.H(1, 1) = 2.0 * inv_var(1);
  for (int k = 0; k < 4; ++k) prob.H(2 + k, 2 + k) = 2.0 * cp.k_err;
  prob.f = Eigen::VectorXd::Zero(6);
  prob.f(0) = -2.0 * inv_var(0) * u_mu(0);
  prob.f(1) = -2.0 * inv_var(1) * u_mu(1);
  prob.A_eq.resize(0, 6);
  prob.b_eq.resize(0);
  prob.A_in.resize(4, 6);
  prob.b_in.resize(4);

  FilterResult out;
  out.diag.kinematic = kinematic;

  Eigen::Vector2d u_lin = u_mu;
  std::array<TightenedRow, 4> tightened;
  qp::QPSolution sol;
  for (int pass = 0; pass < 2; ++pass) {
    prob.A_in.setZero();
    for (int k = 0; k < 4; ++k) {
      tightened[static_cast<std::size_t>(k)] =
          chance_tighten(per_label[static_cast<std::size_t>(k)], cp.eta, u_lin);
      const auto& row = tightened[static_cast<std::size_t>(k)].row;
      prob.A_in(k, 0) = row.a(0);
      prob.A_in(k, 1) = row.a(1);
      prob.A_in(k, 2 + k) = -1.0;  // slack relaxation
      prob.b_in(k) = row.b;
    }
    sol = qp::solve(prob);
    if (sol.status != qp::QPStatus::optimal)
      fail(Errc::qp_failure, std::string("safety filter QP: ") + qp::to_string(sol.status));
    u_lin = sol.u_star.head<2>();
  }

  out.u.delta = std::clamp(sol.u_star(0), -p.delta_max, p.delta_max);
  out.u.a_x = std::clamp(sol.u_star(1), -p.a_x_max, p.a_x_max);

  const Eigen::VectorXd mean = state_belief.mean;
  DynamicState mean_state;
  if (kinematic) {
    const KinematicState ks = kinematic_from_vector(mean);
    mean_state = DynamicState{ks.x_lat, ks.theta, 0.0, ks.v, 0.0, ks.c};
  } else {
    mean_state = dynamic_from_vector(mean);
  }
  out.diag.h = barrier_values(mean_state, cp);
  for (int k = 0; k < 4; ++k) {
    out.diag.slack[static_cast<std::size_t>(k)] = sol.u_star(2 + k);
    out.diag.margin[static_cast<std::size_t>(k)] = tightened[static_cast<std::size_t>(k)].margin;
    const auto& row = tightened[static_cast<std::size_t>(k)].row;
    const double resid = row.b + sol.u_star(2 + k) - row.a.dot(sol.u_star.head<2>());
    out.diag.active[static_cast<std::size_t>(k)] = std::abs(resid) <= 1e-6 * (1.0 + std::abs(row.b));
    out.diag.degenerate =
        out.diag.degenerate || tightened[static_cast<std::size_t>(k)].degenerate;
  }
  out.diag.u_shift = (sol.u_star.head<2>() - u_mu).norm();
  out.diag.qp_status = sol.status;
  return out;
}

}  // namespace racer
