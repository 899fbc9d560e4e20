#include "racer/track.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace racer {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}
}  // namespace

double wrap_angle(double a) {
  double w = std::remainder(a, kTwoPi);
  if (w <= -std::numbers::pi) w = std::numbers::pi;
  return w;
}

std::vector<double> menger_curvature(const std::vector<Eigen::Vector2d>& pts, bool closed) {
  const std::size_t n = pts.size();
  std::vector<double> k(n, 0.0);
  if (n < 3) return k;
  auto at = [&](std::ptrdiff_t i) {
    std::ptrdiff_t m = static_cast<std::ptrdiff_t>(n);
    return pts[static_cast<std::size_t>(((i % m) + m) % m)];
  };
  const std::size_t lo = closed ? 0 : 1;
  const std::size_t hi = closed ? n : n - 1;
  for (std::size_t i = lo; i < hi; ++i) {
    const Eigen::Vector2d d1 = at(static_cast<std::ptrdiff_t>(i)) - at(static_cast<std::ptrdiff_t>(i) - 1);
    const Eigen::Vector2d d2 = at(static_cast<std::ptrdiff_t>(i) + 1) - at(static_cast<std::ptrdiff_t>(i));
    const double denom = d1.norm() * d2.norm() * (d1 + d2).norm();
    k[i] = denom > 1e-18 ? 2.0 * cross2(d1, d2) / denom : 0.0;
  }
  if (!closed && n >= 3) {
    k[0] = k[1];
    k[n - 1] = k[n - 2];
  }
  return k;
}

std::size_t TrackDef::segment_count() const { return closed_ ? xs_.size() : xs_.size() - 1; }

std::size_t TrackDef::next_index(std::size_t i) const {
  return (i + 1 < xs_.size()) ? i + 1 : (closed_ ? 0 : i);
}

double TrackDef::wrap_s(double s) const {
  if (closed_) {
    s = std::fmod(s, total_length_);
    if (s < 0) s += total_length_;
    return s;
  }
  return std::clamp(s, 0.0, total_length_);
}

void TrackDef::locate(double s, std::size_t& seg, double& t) const {
  s = wrap_s(s);
  const std::size_t nseg = segment_count();
  double u = s / ds_;
  seg = std::min(static_cast<std::size_t>(u), nseg - 1);
  t = u - static_cast<double>(seg);
}

Eigen::Vector2d TrackDef::position_at(double s) const {
  std::size_t j;
  double t;
  locate(s, j, t);
  const std::size_t k = next_index(j);
  return Eigen::Vector2d{xs_[j] + t * (xs_[k] - xs_[j]), ys_[j] + t * (ys_[k] - ys_[j])};
}

double TrackDef::heading_at(double s) const {
  std::size_t j;
  double t;
  locate(s, j, t);
  return wrap_angle(psi_[j] + t * dpsi_[j]);
}

Eigen::Vector2d TrackDef::tangent_at(double s) const {
  const double h = heading_at(s);
  return Eigen::Vector2d{std::cos(h), std::sin(h)};
}

Eigen::Vector2d TrackDef::left_normal_at(double s) const {
  const double h = heading_at(s);
  return Eigen::Vector2d{-std::sin(h), std::cos(h)};
}

double TrackDef::curvature_at(double s) const {
  std::size_t j;
  double t;
  locate(s, j, t);
  const std::size_t k = next_index(j);
  return kappa_[j] + t * (kappa_[k] - kappa_[j]);
}

double TrackDef::half_width_at(double s) const {
  std::size_t j;
  double t;
  locate(s, j, t);
  const std::size_t k = next_index(j);
  return w_[j] + t * (w_[k] - w_[j]);
}

TrackDef build_track(const std::vector<TrackPoint>& raw_in, bool closed) {
  require(raw_in.size() >= 4, Errc::too_few_points,
          "track needs at least 4 points, got " + std::to_string(raw_in.size()));

  std::vector<TrackPoint> raw = raw_in;
  // drop an explicitly duplicated closing point
  if (closed && raw.size() > 4) {
    const double dx = raw.front().x - raw.back().x;
    const double dy = raw.front().y - raw.back().y;
    if (std::hypot(dx, dy) < 1e-6) raw.pop_back();
  }

  std::vector<Eigen::Vector2d> pts(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    require(raw[i].w_half > 0.0, Errc::precondition, "half width must be positive");
    pts[i] = Eigen::Vector2d{raw[i].x, raw[i].y};
  }
  const std::size_t nr = pts.size();
  const std::size_t nseg_raw = closed ? nr : nr - 1;
  std::vector<double> s_raw(nr, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < nseg_raw; ++i) {
    const std::size_t j = (i + 1) % nr;
    const double len = (pts[j] - pts[i]).norm();
    require(len > 1e-9, Errc::duplicate_points,
            "consecutive points closer than 1e-9 m at index " + std::to_string(i));
    if (j != 0) s_raw[j] = s_raw[i] + len;
    total += len;
  }

  const std::vector<double> k_raw = menger_curvature(pts, closed);

  TrackDef t;
  t.closed_ = closed;
  std::size_t n;
  if (closed) {
    n = std::max<std::size_t>(8, static_cast<std::size_t>(std::llround(total / 0.1)));
    t.ds_ = total / static_cast<double>(n);
  } else {
    n = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(total / 0.1)) + 1);
    t.ds_ = total / static_cast<double>(n - 1);
  }
  t.total_length_ = total;
  t.xs_.resize(n);
  t.ys_.resize(n);
  t.w_.resize(n);
  t.kappa_.resize(n);

  // interpolate position, width and curvature at uniform arc positions
  std::size_t seg = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double s = std::min(t.ds_ * static_cast<double>(j), total);
    while (seg + 1 < nseg_raw && s_raw[(seg + 1) % nr] <= s && (seg + 1) % nr != 0) ++seg;
    // segment seg spans [s_raw[seg], s_end)
    const std::size_t k = (seg + 1) % nr;
    const double s0 = s_raw[seg];
    const double s1 = (k == 0) ? total : s_raw[k];
    const double u = (s1 > s0) ? std::clamp((s - s0) / (s1 - s0), 0.0, 1.0) : 0.0;
    t.xs_[j] = pts[seg].x() + u * (pts[k].x() - pts[seg].x());
    t.ys_[j] = pts[seg].y() + u * (pts[k].y() - pts[seg].y());
    t.w_[j] = raw[seg].w_half + u * (raw[k].w_half - raw[seg].w_half);
    t.kappa_[j] = k_raw[seg] + u * (k_raw[k] - k_raw[seg]);
  }

  // node tangent headings by central difference, then per-segment deltas
  t.psi_.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t jp, jn;
    if (closed) {
      jp = (j + n - 1) % n;
      jn = (j + 1) % n;
    } else {
      jp = (j == 0) ? 0 : j - 1;
      jn = (j == n - 1) ? n - 1 : j + 1;
    }
    t.psi_[j] = std::atan2(t.ys_[jn] - t.ys_[jp], t.xs_[jn] - t.xs_[jp]);
  }
  const std::size_t nseg = closed ? n : n - 1;
  t.dpsi_.resize(nseg);
  for (std::size_t j = 0; j < nseg; ++j) {
    const std::size_t k = (j + 1) % n;
    t.dpsi_[j] = wrap_angle(t.psi_[k] - t.psi_[j]);
  }

  t.min_w_ = *std::min_element(t.w_.begin(), t.w_.end());
  t.max_w_ = *std::max_element(t.w_.begin(), t.w_.end());

  // coarse boundary polylines for ray casting
  const double bspace = 0.5;
  const std::size_t nb = closed
                             ? std::max<std::size_t>(8, static_cast<std::size_t>(std::llround(total / bspace)))
                             : std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(total / bspace)) + 1);
  const double bds = closed ? total / static_cast<double>(nb) : total / static_cast<double>(nb - 1);
  t.bounds_.spacing = bds;
  t.bounds_.left.resize(nb);
  t.bounds_.right.resize(nb);
  for (std::size_t j = 0; j < nb; ++j) {
    const double s = std::min(bds * static_cast<double>(j), total);
    const Eigen::Vector2d p = t.position_at(s);
    const Eigen::Vector2d nrm = t.left_normal_at(s);
    const double w = t.half_width_at(s);
    t.bounds_.left[j] = p + w * nrm;
    t.bounds_.right[j] = p - w * nrm;
  }
  return t;
}

namespace {

// Signed along-tangent residual of the projection equation at arc position s.
// Root of g is the frame-field projection of p.
double proj_residual(const TrackDef& t, const Eigen::Vector2d& p, double s) {
  const Eigen::Vector2d d = p - t.position_at(s);
  return d.dot(t.tangent_at(s));
}

}  // namespace

FrenetPose to_frenet(const GlobalPose& pose, const TrackDef& track) {
  const Eigen::Vector2d p{pose.x, pose.y};
  const std::size_t n = track.size();
  const auto& xs = track.xs();
  const auto& ys = track.ys();

  std::size_t i0 = 0;
  double best = std::numeric_limits<double>::max();
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = p.x() - xs[i];
    const double dy = p.y() - ys[i];
    const double d2 = dx * dx + dy * dy;
    if (d2 < best) {
      best = d2;
      i0 = i;
    }
  }
  const double thresh = 4.0 * track.max_half_width();
  require(std::sqrt(best) <= thresh + track.spacing(), Errc::off_track_too_far,
          "pose is " + std::to_string(std::sqrt(best)) + " m from the centerline");

  const double ds = track.spacing();
  const double L = track.total_length();
  const double s0 = track.s_at(i0);
  double ga = proj_residual(track, p, s0);

  double sa = s0, sb = s0;
  bool bracketed = std::abs(ga) < 1e-14;
  if (!bracketed) {
    // g decreases in s near the projection; walk toward the sign change
    const double dir = ga > 0 ? 1.0 : -1.0;
    double prev_s = s0, prev_g = ga;
    const std::size_t max_walk = n;
    for (std::size_t k = 1; k <= max_walk; ++k) {
      double s = s0 + dir * ds * static_cast<double>(k);
      if (!track.closed()) s = std::clamp(s, 0.0, L);
      const double g = proj_residual(track, p, s);
      if ((prev_g > 0 && g <= 0) || (prev_g < 0 && g >= 0)) {
        sa = std::min(prev_s, s);
        sb = std::max(prev_s, s);
        ga = proj_residual(track, p, sa);
        bracketed = true;
        break;
      }
      prev_s = s;
      prev_g = g;
      if (!track.closed() && (s <= 0.0 || s >= L)) break;
    }
  }

  double s_star;
  if (!bracketed) {
    s_star = sa;  // open-track end, or exactly at a node
  } else if (sa == sb) {
    s_star = sa;
  } else {
    double lo = sa, hi = sb;
    double glo = ga;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double gm = proj_residual(track, p, mid);
      if ((glo > 0 && gm > 0) || (glo < 0 && gm < 0)) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
      }
    }
    s_star = 0.5 * (lo + hi);
  }

  FrenetPose fr;
  fr.s = track.wrap_s(s_star);
  const Eigen::Vector2d d = p - track.position_at(s_star);
  fr.x_lat = d.dot(track.left_normal_at(s_star));
  require(std::abs(fr.x_lat) <= thresh, Errc::off_track_too_far,
          "lateral offset " + std::to_string(fr.x_lat) + " m exceeds limit");
  fr.theta = wrap_angle(pose.psi - track.heading_at(s_star));
  fr.c = track.curvature_at(s_star);
  return fr;
}

GlobalPose from_frenet(const FrenetPose& fr, const TrackDef& track) {
  const double s = track.wrap_s(fr.s);
  const double c = track.curvature_at(s);
  if (c != 0.0) {
    require(std::abs(fr.x_lat) * std::abs(c) < 1.0, Errc::fold_over,
            "offset " + std::to_string(fr.x_lat) + " m folds over at curvature " + std::to_string(c));
  }
  const Eigen::Vector2d p = track.position_at(s) + fr.x_lat * track.left_normal_at(s);
  GlobalPose pose;
  pose.x = p.x();
  pose.y = p.y();
  pose.psi = wrap_angle(track.heading_at(s) + fr.theta);
  return pose;
}

std::vector<TrackPoint> load_track_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot open track file " + path);
  std::vector<TrackPoint> pts;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.find("x") != std::string::npos && line.find("w_half") != std::string::npos) continue;
    }
    std::stringstream ss(line);
    std::string tok;
    TrackPoint p;
    double* fields[3] = {&p.x, &p.y, &p.w_half};
    int i = 0;
    while (std::getline(ss, tok, ',') && i < 3) *fields[i++] = std::stod(tok);
    require(i == 3, Errc::io_error, "bad track row: " + line);
    pts.push_back(p);
  }
  return pts;
}

void save_track_csv(const std::string& path, const std::vector<TrackPoint>& pts) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write track file " + path);
  out << "x,y,w_half\n";
  char buf[128];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.x, p.y, p.w_half);
    out << buf;
  }
}

}  // namespace racer
