#pragma once

#include <Eigen/Dense>
#include <array>
#include <utility>
#include <vector>

#include "racer/qp.hpp"
#include "racer/vehicle.hpp"

namespace racer {

struct CBFParams {
  double lane_width = 4.0;   // full width L
  double lambda = 2.5;       // class-K gain
  double theta_max = 0.7853981633974483;  // pi/4
  double eta = 0.95;         // chance-constraint confidence
  double k_err = 1e8;        // slack penalty weight
  int n_rollouts = 16;
  double sigma_min = 1e-3;   // floor on control-belief standard deviations

  void validate() const;
};

enum class BarrierLabel { left, right, theta_left, theta_right };

inline const char* to_string(BarrierLabel l) {
  switch (l) {
    case BarrierLabel::left: return "left";
    case BarrierLabel::right: return "right";
    case BarrierLabel::theta_left: return "theta_left";
    case BarrierLabel::theta_right: return "theta_right";
  }
  return "?";
}

// one barrier condition written as a * U <= b over U = [delta, a_x]
struct AffineConstraint {
  Eigen::Vector2d a = Eigen::Vector2d::Zero();
  double b = 0.0;
  BarrierLabel label = BarrierLabel::left;
};

// mean / per-component deviation of n prediction rollouts, raw samples kept
struct GaussianBelief {
  Eigen::MatrixXd samples;  // n x dim
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  static GaussianBelief from_samples(const Eigen::MatrixXd& samples);
  int dim() const { return static_cast<int>(mean.size()); }
  int count() const { return static_cast<int>(samples.rows()); }
};

// inverse standard normal CDF, rational approximation polished to ~1e-15
double normal_quantile(double p);

// barrier values [left, right, theta_left, theta_right] at a state
std::array<double, 4> barrier_values(const DynamicState& s, const CBFParams& cp);

// Degree-3 lane-keeping conditions of the linear-tire model. The rows are the
// exact third time derivative of the lateral offset along the model flow with
// the controls held and the local curvature frozen, collected affine in U.
std::pair<AffineConstraint, AffineConstraint> lane_cbf_rows(const DynamicState& s,
                                                            const VehicleParams& p,
                                                            const CBFParams& cp);

// Degree-2 heading-restriction conditions of the linear-tire model.
std::pair<AffineConstraint, AffineConstraint> heading_cbf_rows(const DynamicState& s,
                                                               const VehicleParams& p,
                                                               const CBFParams& cp);

// Low-speed fallback built on the no-slip model (degree 2 on the lateral
// offset, degree 1 on the heading), small-angle in the steering input.
std::array<AffineConstraint, 4> kinematic_cbf_rows(const KinematicState& s,
                                                   const VehicleParams& p, const CBFParams& cp);

struct TightenedRow {
  AffineConstraint row;
  double margin = 0.0;      // subtracted from the nominal right-hand side
  bool degenerate = false;  // all samples identical
};

// Deterministic surrogate of Pr(a*U <= b) >= eta from sampled rows, with the
// norm term linearized at u_lin.
TightenedRow chance_tighten(const std::vector<AffineConstraint>& sampled, double eta,
                            const Eigen::Vector2d& u_lin);

struct FilterDiagnostics {
  std::array<double, 4> h{};       // barrier values at the belief mean
  std::array<double, 4> slack{};
  std::array<double, 4> margin{};  // chance-constraint tightenings
  std::array<bool, 4> active{};
  bool degenerate = false;
  double u_shift = 0.0;  // || u_safe - u_ref_mean ||
  qp::QPStatus qp_status = qp::QPStatus::max_iter;
  bool kinematic = false;
};

struct FilterResult {
  Control u;
  FilterDiagnostics diag;
};

// Minimally invasive correction of the reference control belief subject to
// the four tightened barrier rows, slack-relaxed so the program is always
// feasible. state_belief rows are dynamic states (dim 6) or kinematic states
// (dim 4); the matching model's rows are used.
FilterResult safety_filter(const GaussianBelief& u_ref, const GaussianBelief& state_belief,
                           const VehicleParams& p, const CBFParams& cp);

}  // namespace racer
