#pragma once

#include <Eigen/Dense>

#include "racer/errors.hpp"

namespace racer {
namespace qp {

// min 0.5 u'Hu + f'u   s.t.  A_in u <= b_in,  A_eq u = b_eq
struct QPProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
};

enum class QPStatus { optimal, infeasible, max_iter };

inline const char* to_string(QPStatus s) {
  switch (s) {
    case QPStatus::optimal: return "optimal";
    case QPStatus::infeasible: return "infeasible";
    case QPStatus::max_iter: return "max_iter";
  }
  return "?";
}

struct QPSolution {
  Eigen::VectorXd u_star;
  Eigen::VectorXd duals_in;
  Eigen::VectorXd duals_eq;
  QPStatus status = QPStatus::max_iter;
  double kkt_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

struct QPSettings {
  double tol = 1e-9;  // feasibility tolerance
  int max_iter = 0;   // 0: derive from problem size
};

// Dense dual active-set solve; exact on small well-conditioned problems.
QPSolution solve(const QPProblem& p, const QPSettings& settings = {});

// Operator-splitting solve for large box-constrained problems
// (lo <= u <= hi), with an exact polish step on the identified active set.
// duals_in is [upper-bound duals; lower-bound duals], size 2n.
QPSolution solve_box(const Eigen::MatrixXd& H, const Eigen::VectorXd& f,
                     const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                     const QPSettings& settings = {});

// Infinity-norm KKT residual (stationarity, feasibility, dual sign,
// complementarity) of a candidate solution.
double kkt_residual(const QPProblem& p, const Eigen::VectorXd& u,
                    const Eigen::VectorXd& duals_in, const Eigen::VectorXd& duals_eq);

double objective(const QPProblem& p, const Eigen::VectorXd& u);

}  // namespace qp
}  // namespace racer
