#pragma once

#include <Eigen/Dense>

#include "racer/errors.hpp"

namespace racer {

struct VehicleParams {
  double m = 1200.0;          // kg
  double Iz = 1600.0;         // kg m^2
  double l_f = 1.25;          // CoG to front axle, m
  double l_r = 1.35;          // CoG to rear axle, m
  double C_f = 70000.0;       // front cornering stiffness, N/rad
  double C_r = 80000.0;       // rear cornering stiffness, N/rad
  double wheelbase = 2.6;     // l_f + l_r
  double delta_max = 0.45;    // rad
  double a_x_max = 6.0;       // m/s^2
  double v_min_dynamic = 0.5; // below this the linear-tire model is invalid

  void validate() const;
};

// state of the no-slip bicycle model: [x_lat, theta, v, c]
struct KinematicState {
  double x_lat = 0.0;
  double theta = 0.0;
  double v = 0.0;
  double c = 0.0;
};

// state of the linear-tire model: [x_lat, theta, omega, v, v_perp, c]
struct DynamicState {
  double x_lat = 0.0;
  double theta = 0.0;
  double omega = 0.0;   // yaw rate
  double v = 0.0;       // longitudinal speed
  double v_perp = 0.0;  // lateral speed, left positive
  double c = 0.0;       // local track curvature, held constant by the model
};

struct Control {
  double delta = 0.0;  // steering angle, rad
  double a_x = 0.0;    // longitudinal acceleration, m/s^2
};

enum class ModelKind { kinematic, dynamic };

inline int state_dim(ModelKind k) { return k == ModelKind::kinematic ? 4 : 6; }

Eigen::Vector4d to_vector(const KinematicState& s);
Eigen::Matrix<double, 6, 1> to_vector(const DynamicState& s);
KinematicState kinematic_from_vector(const Eigen::VectorXd& v);
DynamicState dynamic_from_vector(const Eigen::VectorXd& v);

KinematicState kinematic_derivative(const KinematicState& s, const Control& u,
                                    const VehicleParams& p);
DynamicState dynamic_derivative(const DynamicState& s, const Control& u, const VehicleParams& p);

// classical RK4 with the control held over the step; the caller refreshes the
// curvature entry from the track afterwards
KinematicState integrate(const KinematicState& s, const Control& u, const VehicleParams& p,
                         double dt);
DynamicState integrate(const DynamicState& s, const Control& u, const VehicleParams& p,
                       double dt);

struct Jacobians {
  Eigen::MatrixXd J_x;
  Eigen::MatrixXd J_u;
};

Jacobians jacobians(const KinematicState& s, const Control& u, const VehicleParams& p);
Jacobians jacobians(const DynamicState& s, const Control& u, const VehicleParams& p);

// forward-Euler discretization x+ = A x + B u + C of the model linearized at
// (s, u)
struct Discretization {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd C;
};

Discretization linearize(const KinematicState& s, const Control& u, const VehicleParams& p,
                         double dt);
Discretization linearize(const DynamicState& s, const Control& u, const VehicleParams& p,
                         double dt);

Discretization linearize(ModelKind kind, const Eigen::VectorXd& x, const Control& u,
                         const VehicleParams& p, double dt);
Eigen::VectorXd derivative(ModelKind kind, const Eigen::VectorXd& x, const Control& u,
                           const VehicleParams& p);

}  // namespace racer
