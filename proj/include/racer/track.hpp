#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "racer/errors.hpp"

namespace racer {

// wrap to (-pi, pi]
double wrap_angle(double a);

struct GlobalPose {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

struct FrenetPose {
  double s = 0.0;      // arc length along centerline
  double x_lat = 0.0;  // signed lateral offset, left positive
  double theta = 0.0;  // heading relative to centerline tangent
  double c = 0.0;      // centerline curvature at s
};

struct TrackPoint {
  double x = 0.0;
  double y = 0.0;
  double w_half = 0.0;  // half lane width
};

// Centerline resampled to uniform spacing with per-node half-width, signed
// curvature (left turn positive) and tangent heading. Immutable once built;
// all queries are const and safe to share across threads.
class TrackDef {
 public:
  std::size_t size() const { return xs_.size(); }
  bool closed() const { return closed_; }
  double spacing() const { return ds_; }
  double total_length() const { return total_length_; }

  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }
  const std::vector<double>& half_widths() const { return w_; }
  const std::vector<double>& curvature() const { return kappa_; }
  const std::vector<double>& headings() const { return psi_; }
  double s_at(std::size_t i) const { return ds_ * static_cast<double>(i); }

  double min_half_width() const { return min_w_; }
  double max_half_width() const { return max_w_; }

  double wrap_s(double s) const;
  Eigen::Vector2d position_at(double s) const;
  double heading_at(double s) const;
  Eigen::Vector2d tangent_at(double s) const;
  Eigen::Vector2d left_normal_at(double s) const;
  double curvature_at(double s) const;
  double half_width_at(double s) const;

  // Lane edge polylines at coarse spacing, used for ray casting.
  struct Boundaries {
    std::vector<Eigen::Vector2d> left;
    std::vector<Eigen::Vector2d> right;
    double spacing = 0.5;
  };
  const Boundaries& ray_boundaries() const { return bounds_; }

 private:
  friend TrackDef build_track(const std::vector<TrackPoint>& raw, bool closed);

  void locate(double s, std::size_t& seg, double& t) const;
  std::size_t next_index(std::size_t i) const;
  std::size_t segment_count() const;

  bool closed_ = false;
  double ds_ = 0.1;
  double total_length_ = 0.0;
  double min_w_ = 0.0;
  double max_w_ = 0.0;
  std::vector<double> xs_, ys_, w_, kappa_;
  std::vector<double> psi_;   // node tangent heading, wrapped
  std::vector<double> dpsi_;  // heading change over segment i, in (-pi, pi]
  Boundaries bounds_;
};

// Resamples the polyline to uniform 0.1 m spacing; curvature by three-point
// (circumcircle) finite differences on the input vertices, interpolated to
// the resampled nodes.
TrackDef build_track(const std::vector<TrackPoint>& raw, bool closed);

FrenetPose to_frenet(const GlobalPose& pose, const TrackDef& track);
GlobalPose from_frenet(const FrenetPose& fr, const TrackDef& track);

// Signed three-point curvature at each vertex of a polyline (left positive).
// Open polylines copy the neighbouring value at the ends.
std::vector<double> menger_curvature(const std::vector<Eigen::Vector2d>& pts, bool closed);

std::vector<TrackPoint> load_track_csv(const std::string& path);
void save_track_csv(const std::string& path, const std::vector<TrackPoint>& pts);

}  // namespace racer
