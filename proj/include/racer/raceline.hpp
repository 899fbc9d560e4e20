#pragma once

#include <string>
#include <vector>

#include "racer/track.hpp"

namespace racer {

struct VelocityLimits {
  double a_lat_max = 3.5;        // m/s^2
  double a_lon_accel_max = 3.0;  // m/s^2
  double a_lon_brake_max = 4.0;  // m/s^2
  double v_max = 11.0;           // m/s

  void validate() const;
};

struct RacelinePoint {
  double x = 0.0;
  double y = 0.0;
  double s = 0.0;      // arc length along the raceline itself
  double v_x = 0.0;    // speed profile
  double a_x = 0.0;    // longitudinal acceleration profile
  double psi = 0.0;    // raceline heading
  double kappa = 0.0;  // raceline curvature, recomputed exactly on the offset path
  double alpha = 0.0;  // lateral offset from the centerline
};

// One point per track node (same index), so a track arc position maps to a
// raceline sample by the shared fractional node index.
struct RacelineTrajectory {
  std::vector<RacelinePoint> points;
  bool closed = false;
  double total_length = 0.0;  // raceline arc length
};

// Lateral offsets minimizing the summed squared curvature of the offset path
// under the linearized curvature model, bounded to keep the vehicle inside
// the lane.
std::vector<double> min_curvature_line(const TrackDef& track, double w_veh);

struct VelocityProfile {
  std::vector<double> v;
  std::vector<double> a;
};

// Pointwise lateral-acceleration cap followed by friction-circle limited
// forward/backward passes; iterated to a periodic profile on closed tracks.
VelocityProfile velocity_profile(const std::vector<double>& kappa,
                                 const std::vector<double>& seg_len, bool closed,
                                 const VelocityLimits& limits);

RacelineTrajectory build_raceline(const TrackDef& track, double w_veh,
                                  const VelocityLimits& limits);

// Centerline reference with the same velocity-profile treatment (alpha = 0).
RacelineTrajectory build_centerline_reference(const TrackDef& track, const VelocityLimits& limits);

void save_raceline_csv(const std::string& path, const RacelineTrajectory& rl);

// Sum of squared curvature of a polyline, used to compare the optimized line
// against the centerline.
double sum_squared_curvature(const std::vector<Eigen::Vector2d>& pts, bool closed);

}  // namespace racer
