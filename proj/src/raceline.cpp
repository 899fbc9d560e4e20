#include "racer/raceline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "racer/qp.hpp"

namespace racer {

void VelocityLimits::validate() const {
  require(a_lat_max > 0 && a_lon_accel_max > 0 && a_lon_brake_max > 0 && v_max > 0,
          Errc::bad_config, "velocity limits must be strictly positive");
}

std::vector<double> min_curvature_line(const TrackDef& track, double w_veh) {
  require(w_veh >= 0.0, Errc::precondition, "vehicle width must be nonnegative");
  require(w_veh < 2.0 * track.min_half_width(), Errc::infeasible,
          "vehicle width " + std::to_string(w_veh) + " m does not fit the lane");

  const int n = static_cast<int>(track.size());
  const double ds = track.spacing();
  const bool closed = track.closed();
  const auto& kc = track.curvature();

  Eigen::VectorXd lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    const double bound = track.half_widths()[static_cast<std::size_t>(i)] - 0.5 * w_veh;
    require(bound >= 0.0, Errc::infeasible, "empty offset interval at node " + std::to_string(i));
    hi(i) = bound;
    lo(i) = -bound;
  }

  // Offset-path curvature linearized about the centerline:
  //   kappa(alpha) ~= kappa_c + alpha'' + kappa_c^2 alpha
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  const double inv2 = 1.0 / (ds * ds);
  for (int i = 0; i < n; ++i) {
    if (closed) {
      M(i, (i + n - 1) % n) += inv2;
      M(i, i) += -2.0 * inv2;
      M(i, (i + 1) % n) += inv2;
    } else if (i > 0 && i < n - 1) {
      M(i, i - 1) += inv2;
      M(i, i) += -2.0 * inv2;
      M(i, i + 1) += inv2;
    }
    M(i, i) += kc[static_cast<std::size_t>(i)] * kc[static_cast<std::size_t>(i)];
  }
  if (!closed) {
    lo(0) = hi(0) = 0.0;
    lo(n - 1) = hi(n - 1) = 0.0;
  }

  Eigen::VectorXd kvec(n);
  for (int i = 0; i < n; ++i) kvec(i) = kc[static_cast<std::size_t>(i)];

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  H.selfadjointView<Eigen::Lower>().rankUpdate(M.transpose());
  H = Eigen::MatrixXd(H.selfadjointView<Eigen::Lower>());
  const double reg = 1e-12 * std::max(1.0, H.diagonal().maxCoeff());
  H.diagonal().array() += reg;
  H *= 2.0;
  Eigen::VectorXd f = 2.0 * M.transpose() * kvec;

  // keep the certificate well scaled
  const double sc = H.cwiseAbs().maxCoeff();
  qp::QPSolution sol = qp::solve_box(H / sc, f / sc, lo, hi);
  if (sol.status != qp::QPStatus::optimal)
    fail(Errc::qp_failure, std::string("raceline QP: ") + qp::to_string(sol.status));

  return std::vector<double>(sol.u_star.data(), sol.u_star.data() + n);
}

VelocityProfile velocity_profile(const std::vector<double>& kappa,
                                 const std::vector<double>& seg_len, bool closed,
                                 const VelocityLimits& limits) {
  limits.validate();
  const std::size_t n = kappa.size();
  require(n >= 2, Errc::precondition, "profile needs at least 2 points");
  require(seg_len.size() == (closed ? n : n - 1), Errc::precondition, "bad segment count");

  VelocityProfile out;
  out.v.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = std::abs(kappa[i]);
    out.v[i] = k > 1e-12 ? std::min(limits.v_max, std::sqrt(limits.a_lat_max / k)) : limits.v_max;
  }

  // fraction of longitudinal acceleration left by lateral usage
  auto circle = [&](double v, double k) {
    const double lat = v * v * std::abs(k) / limits.a_lat_max;
    return std::sqrt(std::max(0.0, 1.0 - lat * lat));
  };

  const std::size_t nseg = seg_len.size();
  auto forward = [&]() {
    for (std::size_t i = 0; i < nseg; ++i) {
      const std::size_t j = (i + 1) % n;
      const double a = limits.a_lon_accel_max * circle(out.v[i], kappa[i]);
      out.v[j] = std::min(out.v[j], std::sqrt(out.v[i] * out.v[i] + 2.0 * a * seg_len[i]));
    }
  };
  auto backward = [&]() {
    for (std::size_t k = nseg; k-- > 0;) {
      const std::size_t j = (k + 1) % n;
      const double a = limits.a_lon_brake_max * circle(out.v[j], kappa[j]);
      out.v[k] = std::min(out.v[k], std::sqrt(out.v[j] * out.v[j] + 2.0 * a * seg_len[k]));
    }
  };

  if (closed) {
    for (int sweep = 0; sweep < 100; ++sweep) {
      const std::vector<double> prev = out.v;
      forward();
      backward();
      double change = 0.0;
      for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(out.v[i] - prev[i]));
      if (change < 1e-4) break;
    }
  } else {
    forward();
    backward();
  }

  for (auto& v : out.v) v = std::max(v, 0.1);

  out.a.resize(n);
  for (std::size_t i = 0; i < nseg; ++i) {
    const std::size_t j = (i + 1) % n;
    out.a[i] = (out.v[j] * out.v[j] - out.v[i] * out.v[i]) / (2.0 * seg_len[i]);
  }
  if (!closed) out.a[n - 1] = out.a[n - 2];
  return out;
}

namespace {

RacelineTrajectory assemble(const TrackDef& track, const std::vector<double>& alpha,
                            const VelocityLimits& limits) {
  const std::size_t n = track.size();
  const bool closed = track.closed();

  std::vector<Eigen::Vector2d> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = track.s_at(i);
    pts[i] = track.position_at(s) + alpha[i] * track.left_normal_at(s);
  }

  const std::vector<double> kap = menger_curvature(pts, closed);
  const std::size_t nseg = closed ? n : n - 1;
  std::vector<double> seg(nseg);
  for (std::size_t i = 0; i < nseg; ++i) seg[i] = (pts[(i + 1) % n] - pts[i]).norm();

  const VelocityProfile prof = velocity_profile(kap, seg, closed, limits);

  RacelineTrajectory rl;
  rl.closed = closed;
  rl.points.resize(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = rl.points[i];
    p.x = pts[i].x();
    p.y = pts[i].y();
    p.s = s;
    p.v_x = prof.v[i];
    p.a_x = prof.a[i];
    p.kappa = kap[i];
    p.alpha = alpha[i];
    std::size_t ip = (i + n - 1) % n;
    std::size_t in = (i + 1) % n;
    if (!closed) {
      ip = (i == 0) ? 0 : i - 1;
      in = (i == n - 1) ? n - 1 : i + 1;
    }
    p.psi = std::atan2(pts[in].y() - pts[ip].y(), pts[in].x() - pts[ip].x());
    if (i < nseg) s += seg[i];
  }
  double total = 0.0;
  for (double l : seg) total += l;
  rl.total_length = total;
  return rl;
}

}  // namespace

RacelineTrajectory build_raceline(const TrackDef& track, double w_veh,
                                  const VelocityLimits& limits) {
  return assemble(track, min_curvature_line(track, w_veh), limits);
}

RacelineTrajectory build_centerline_reference(const TrackDef& track,
                                              const VelocityLimits& limits) {
  return assemble(track, std::vector<double>(track.size(), 0.0), limits);
}

void save_raceline_csv(const std::string& path, const RacelineTrajectory& rl) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write raceline file " + path);
  out << "s,x,y,alpha,psi,kappa,v_x,a_x\n";
  char buf[256];
  for (const auto& p : rl.points) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", p.s, p.x, p.y,
                  p.alpha, p.psi, p.kappa, p.v_x, p.a_x);
    out << buf;
  }
}

double sum_squared_curvature(const std::vector<Eigen::Vector2d>& pts, bool closed) {
  const std::vector<double> k = menger_curvature(pts, closed);
  double sum = 0.0;
  for (double v : k) sum += v * v;
  return sum;
}

}  // namespace racer
