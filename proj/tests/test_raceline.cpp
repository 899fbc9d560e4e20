#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "racer/harness.hpp"
#include "racer/raceline.hpp"
#include "racer/rng.hpp"

using namespace racer;

namespace {

TrackDef straight_track(double len = 60.0, double w = 2.0) {
  std::vector<TrackPoint> pts;
  for (int i = 0; i <= 120; ++i) pts.push_back({len * i / 120.0, 0.0, w});
  return build_track(pts, false);
}

TrackDef circle_track(double R = 20.0, double w = 2.0, int n = 512) {
  std::vector<TrackPoint> pts;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    pts.push_back({R * std::cos(a), R * std::sin(a), w});
  }
  return build_track(pts, true);
}

std::vector<Eigen::Vector2d> offset_path(const TrackDef& t, const std::vector<double>& alpha) {
  std::vector<Eigen::Vector2d> pts(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    pts[i] = t.position_at(t.s_at(i)) + alpha[i] * t.left_normal_at(t.s_at(i));
  return pts;
}

std::vector<Eigen::Vector2d> center_path(const TrackDef& t) {
  return offset_path(t, std::vector<double>(t.size(), 0.0));
}

// exhaustive scan over constant offsets, recomputing the exact curvature
double best_constant_offset(const TrackDef& t, double bound) {
  double best_alpha = 0.0;
  double best = std::numeric_limits<double>::max();
  for (double a = -bound; a <= bound + 1e-12; a += 0.001) {
    const auto pts = offset_path(t, std::vector<double>(t.size(), a));
    const double cost = sum_squared_curvature(pts, t.closed());
    if (cost < best) {
      best = cost;
      best_alpha = a;
    }
  }
  return best_alpha;
}

}  // namespace

TEST_CASE("straight track keeps a zero offset") {
  const TrackDef t = straight_track();
  const auto alpha = min_curvature_line(t, 0.5);
  for (double a : alpha) CHECK(std::abs(a) < 1e-6);
}

TEST_CASE("circular track rides the outer bound") {
  const TrackDef t = circle_track();
  const double w_veh = 0.5;
  const auto alpha = min_curvature_line(t, w_veh);
  const double oracle = best_constant_offset(t, 2.0 - 0.25);
  CHECK(oracle == doctest::Approx(-1.75).epsilon(1e-3));  // outward on a ccw circle
  for (double a : alpha) CHECK(a == doctest::Approx(oracle).epsilon(0.0).scale(1.0).epsilon(1e-3));
  for (double a : alpha) CHECK(std::abs(a - oracle) < 1e-3);
}

TEST_CASE("vehicle wider than the lane is infeasible") {
  const TrackDef t = circle_track();
  try {
    min_curvature_line(t, 5.0);
    FAIL("expected infeasible");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::infeasible);
  }
}

TEST_CASE("optimized line never exceeds the centerline curvature cost") {
  for (int variant = 0; variant < 3; ++variant) {
    const TrackDef t = variant == 0   ? straight_track()
                       : variant == 1 ? circle_track()
                                      : default_track();
    const auto alpha = min_curvature_line(t, 1.2);
    const double line = sum_squared_curvature(offset_path(t, alpha), t.closed());
    const double center = sum_squared_curvature(center_path(t), t.closed());
    CHECK(line <= center + 1e-9);
  }
}

TEST_CASE("raceline stays strictly inside the lane") {
  const TrackDef t = default_track();
  const double w_veh = 1.2;
  const auto alpha = min_curvature_line(t, w_veh);
  for (std::size_t i = 0; i < alpha.size(); ++i)
    CHECK(std::abs(alpha[i]) <= t.half_widths()[i] - 0.5 * w_veh + 1e-9);
}

TEST_CASE("single-coordinate perturbations never improve the objective") {
  // optimality certificate on a small track
  std::vector<TrackPoint> pts;
  for (int i = 0; i < 160; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 160;
    const double r = 12.0 + 2.0 * std::cos(3 * a);
    pts.push_back({r * std::cos(a), r * std::sin(a), 1.5});
  }
  const TrackDef t = build_track(pts, true);
  const auto alpha = min_curvature_line(t, 0.6);

  // rebuild the objective exactly as the solver sees it
  const int n = static_cast<int>(t.size());
  const double inv2 = 1.0 / (t.spacing() * t.spacing());
  const auto& kc = t.curvature();
  auto objective = [&](const std::vector<double>& a) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dd = (a[(i + n - 1) % n] - 2.0 * a[i] + a[(i + 1) % n]) * inv2;
      const double k = kc[static_cast<std::size_t>(i)] +
                       kc[static_cast<std::size_t>(i)] * kc[static_cast<std::size_t>(i)] * a[i] + dd;
      sum += k * k;
    }
    return sum;
  };
  const double base = objective(alpha);
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int i = static_cast<int>(rng.integer(static_cast<std::uint64_t>(n)));
    const double bound = t.half_widths()[static_cast<std::size_t>(i)] - 0.3;
    for (double d : {0.01, -0.01}) {
      auto perturbed = alpha;
      perturbed[static_cast<std::size_t>(i)] =
          std::clamp(perturbed[static_cast<std::size_t>(i)] + d, -bound, bound);
      CHECK(objective(perturbed) >= base - 1e-7 * std::max(1.0, base));
    }
  }
}

TEST_CASE("constant curvature pins the speed to the lateral limit") {
  VelocityLimits lim;
  lim.a_lat_max = 5.0;
  lim.v_max = 100.0;
  const int n = 200;
  std::vector<double> kappa(n, 0.05), seg(n, 0.5);
  const auto prof = velocity_profile(kappa, seg, true, lim);
  for (double v : prof.v) CHECK(v == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("straight segment cruises at the cap with zero acceleration") {
  VelocityLimits lim;
  lim.v_max = 30.0;
  const int n = 100;
  std::vector<double> kappa(n, 0.0), seg(n - 1, 1.0);
  const auto prof = velocity_profile(kappa, seg, false, lim);
  for (double v : prof.v) CHECK(v == doctest::Approx(30.0));
  for (int i = 0; i < n - 1; ++i) CHECK(std::abs(prof.a[static_cast<std::size_t>(i)]) < 1e-9);
}

TEST_CASE("hairpin profile satisfies the pairwise feasibility oracle") {
  // straight, tight hairpin, straight
  std::vector<double> kappa;
  std::vector<double> seg;
  for (int i = 0; i < 80; ++i) kappa.push_back(0.0);
  for (int i = 0; i < 40; ++i) kappa.push_back(0.25);
  for (int i = 0; i < 80; ++i) kappa.push_back(0.0);
  for (std::size_t i = 0; i + 1 < kappa.size(); ++i) seg.push_back(0.5);
  VelocityLimits lim;
  const auto prof = velocity_profile(kappa, seg, false, lim);

  auto circle = [&](double v, double k) {
    const double lat = v * v * std::abs(k) / lim.a_lat_max;
    return std::sqrt(std::max(0.0, 1.0 - lat * lat));
  };
  for (std::size_t i = 0; i + 1 < prof.v.size(); ++i) {
    const double dv2 = prof.v[i + 1] * prof.v[i + 1] - prof.v[i] * prof.v[i];
    if (dv2 >= 0) {
      CHECK(dv2 <= 2.0 * lim.a_lon_accel_max * circle(prof.v[i], kappa[i]) * seg[i] + 1e-6);
    } else {
      CHECK(-dv2 <= 2.0 * lim.a_lon_brake_max * circle(prof.v[i + 1], kappa[i + 1]) * seg[i] + 1e-6);
    }
  }
}

TEST_CASE("profile matches the relaxation oracle and is pointwise maximal") {
  const TrackDef t = default_track();
  std::vector<double> kappa(t.curvature());
  // restrict to a 200-point subsample to keep the oracle cheap
  std::vector<double> k2, seg2;
  const std::size_t stride = t.size() / 200;
  for (std::size_t i = 0; i < t.size(); i += stride) k2.push_back(kappa[i]);
  for (std::size_t i = 0; i + 1 <= k2.size(); ++i) seg2.push_back(t.spacing() * stride);
  VelocityLimits lim;
  const auto prof = velocity_profile(k2, seg2, true, lim);
  const auto oracle = oracles::velocity_relaxation_oracle(k2, seg2, true, lim);
  for (std::size_t i = 0; i < k2.size(); ++i)
    CHECK(prof.v[i] == doctest::Approx(oracle[i]).epsilon(1e-3));
}

TEST_CASE("acceleration profile is consistent with v dv/ds") {
  const TrackDef t = default_track();
  VelocityLimits lim;
  const RacelineTrajectory rl = build_raceline(t, 1.2, lim);
  const std::size_t n = rl.points.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double ds = rl.points[i + 1].s - rl.points[i].s;
    const double dv2 = rl.points[i + 1].v_x * rl.points[i + 1].v_x -
                       rl.points[i].v_x * rl.points[i].v_x;
    CHECK(rl.points[i].a_x == doctest::Approx(dv2 / (2.0 * ds)).epsilon(1e-9));
  }
  // lap speeds positive and lateral acceleration bounded
  for (const auto& p : rl.points) {
    CHECK(p.v_x > 0.0);
    CHECK(p.v_x * p.v_x * std::abs(p.kappa) <= lim.a_lat_max + 1e-6);
  }
}

TEST_CASE("raceline csv export") {
  const TrackDef t = default_track();
  VelocityLimits lim;
  const RacelineTrajectory rl = build_raceline(t, 1.2, lim);
  const std::string path = "test_raceline_io.csv";
  save_raceline_csv(path, rl);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "s,x,y,alpha,psi,kappa,v_x,a_x");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == rl.points.size());
  std::remove(path.c_str());
}
