#include "racer/qp.hpp"


#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace racer {
namespace qp {

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_psd(const Eigen::MatrixXd& H) {
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  Eigen::MatrixXd Hs = 0.5 * (H + H.transpose());
  double reg = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(Hs);
    if (llt.info() == Eigen::Success) return llt;
    reg = (reg == 0.0) ? 1e-9 * scale : reg * 10.0;
    Hs += reg * Eigen::MatrixXd::Identity(H.rows(), H.cols());
  }
  fail(Errc::precondition, "H is not positive semidefinite");
}

}  // namespace

double objective(const QPProblem& p, const Eigen::VectorXd& u) {
  return 0.5 * u.dot(p.H * u) + p.f.dot(u);
}

double kkt_residual(const QPProblem& p, const Eigen::VectorXd& u,
                    const Eigen::VectorXd& duals_in, const Eigen::VectorXd& duals_eq) {
  Eigen::VectorXd grad = p.H * u + p.f;
  if (p.A_in.rows() > 0) grad += p.A_in.transpose() * duals_in;
  if (p.A_eq.rows() > 0) grad += p.A_eq.transpose() * duals_eq;
  double r = grad.cwiseAbs().maxCoeff();
  if (p.A_in.rows() > 0) {
    const Eigen::VectorXd slack = p.A_in * u - p.b_in;
    r = std::max(r, slack.cwiseMax(0.0).maxCoeff());                      // primal
    r = std::max(r, (-duals_in).cwiseMax(0.0).maxCoeff());                // dual sign
    r = std::max(r, duals_in.cwiseProduct(slack).cwiseAbs().maxCoeff());  // complementarity
  }
  if (p.A_eq.rows() > 0) {
    r = std::max(r, (p.A_eq * u - p.b_eq).cwiseAbs().maxCoeff());
  }
  return r;
}

QPSolution solve(const QPProblem& p, const QPSettings& settings) {
  const int n = static_cast<int>(p.H.rows());
  const int m = static_cast<int>(p.A_in.rows());
  const int neq = static_cast<int>(p.A_eq.rows());
  require(p.H.cols() == n && p.f.size() == n, Errc::precondition, "bad H/f dimensions");
  require(m == 0 || p.A_in.cols() == n, Errc::precondition, "bad A_in dimensions");
  require(neq == 0 || p.A_eq.cols() == n, Errc::precondition, "bad A_eq dimensions");
  {
    const double asym = (p.H - p.H.transpose()).cwiseAbs().maxCoeff();
    require(asym <= 1e-9 * std::max(1.0, p.H.cwiseAbs().maxCoeff()), Errc::precondition,
            "H is not symmetric");
  }

  const auto llt = factor_psd(p.H);
  const int max_iter = settings.max_iter > 0 ? settings.max_iter : 200 + 30 * (n + m + neq);

  auto normal_of = [&](int id) -> Eigen::VectorXd {
    return id < neq ? p.A_eq.row(id).transpose() : p.A_in.row(id - neq).transpose();
  };
  auto rhs_of = [&](int id) { return id < neq ? p.b_eq(id) : p.b_in(id - neq); };

  QPSolution sol;
  sol.u_star = -llt.solve(p.f);
  sol.duals_in = Eigen::VectorXd::Zero(m);
  sol.duals_eq = Eigen::VectorXd::Zero(neq);

  std::vector<int> act;       // constraint ids, equalities first as encountered
  std::vector<double> sign;   // +-1 orientation used when activated (eq only flips)
  Eigen::VectorXd lam(0);

  Eigen::VectorXd& u = sol.u_star;
  int iters = 0;
  const double vtol = settings.tol;

  auto finish = [&](QPStatus status) {
    for (std::size_t k = 0; k < act.size(); ++k) {
      if (act[k] < neq)
        sol.duals_eq(act[k]) = sign[k] * lam(static_cast<Eigen::Index>(k));
      else
        sol.duals_in(act[k] - neq) = lam(static_cast<Eigen::Index>(k));
    }
    sol.status = status;
    sol.iterations = iters;
    sol.kkt_residual = kkt_residual(p, u, sol.duals_in, sol.duals_eq);
    return sol;
  };

  while (true) {
    if (++iters > max_iter) return finish(QPStatus::max_iter);

    // most violated constraint not active, equalities first
    int pick = -1;
    double pick_sign = 1.0;
    auto is_active = [&](int id) { return std::find(act.begin(), act.end(), id) != act.end(); };
    double worst = 0.0;
    for (int id = 0; id < neq; ++id) {
      if (is_active(id)) continue;
      const double v = normal_of(id).dot(u) - rhs_of(id);
      const double mag = std::abs(v);
      if (mag > vtol * (1.0 + std::abs(rhs_of(id))) && mag > worst) {
        worst = mag;
        pick = id;
        pick_sign = v > 0 ? 1.0 : -1.0;
      }
    }
    if (pick < 0) {
      worst = 0.0;
      for (int id = neq; id < neq + m; ++id) {
        if (is_active(id)) continue;
        const double v = normal_of(id).dot(u) - rhs_of(id);
        if (v > vtol * (1.0 + std::abs(rhs_of(id))) && v > worst) {
          worst = v;
          pick = id;
          pick_sign = 1.0;
        }
      }
    }
    if (pick < 0) return finish(QPStatus::optimal);

    const Eigen::VectorXd a_p = pick_sign * normal_of(pick);
    const double b_p = pick_sign * rhs_of(pick);
    double s_p = a_p.dot(u) - b_p;
    double lam_p = 0.0;

    // step toward satisfying pick, dropping blockers as their duals vanish
    while (true) {
      if (++iters > max_iter) return finish(QPStatus::max_iter);
      const int q = static_cast<int>(act.size());
      const Eigen::VectorXd Hia = llt.solve(a_p);
      Eigen::VectorXd z, r;
      if (q > 0) {
        Eigen::MatrixXd N(n, q);
        for (int k = 0; k < q; ++k) N.col(k) = sign[static_cast<std::size_t>(k)] * normal_of(act[static_cast<std::size_t>(k)]);
        const Eigen::MatrixXd HiN = llt.solve(N);
        const Eigen::MatrixXd B = N.transpose() * HiN;
        r = B.ldlt().solve(N.transpose() * Hia);
        z = Hia - HiN * r;
      } else {
        z = Hia;
        r.resize(0);
      }

      const double zTa = a_p.dot(z);
      const bool z_zero = z.cwiseAbs().maxCoeff() <= 1e-11 * (1.0 + Hia.cwiseAbs().maxCoeff());
      const double t2 = (!z_zero && zTa > 0) ? s_p / zTa : std::numeric_limits<double>::infinity();

      double t1 = std::numeric_limits<double>::infinity();
      int block = -1;
      for (int k = 0; k < q; ++k) {
        if (act[static_cast<std::size_t>(k)] < neq) continue;  // equalities never drop
        if (r(k) > 1e-12) {
          const double cand = lam(k) / r(k);
          if (cand < t1) {
            t1 = cand;
            block = k;
          }
        }
      }

      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) return finish(QPStatus::infeasible);

      if (!z_zero) u -= t * z;
      if (q > 0) lam -= t * r;
      lam_p += t;
      s_p = a_p.dot(u) - b_p;

      if (t2 <= t1) {
        act.push_back(pick);
        sign.push_back(pick_sign);
        lam.conservativeResize(lam.size() + 1);
        lam(lam.size() - 1) = lam_p;
        break;
      }
      // drop the blocking constraint and keep going
      act.erase(act.begin() + block);
      sign.erase(sign.begin() + block);
      const Eigen::Index bi = block;
      for (Eigen::Index k = bi; k + 1 < lam.size(); ++k) lam(k) = lam(k + 1);
      lam.conservativeResize(lam.size() - 1);
    }
  }
}

QPSolution solve_box(const Eigen::MatrixXd& H_in, const Eigen::VectorXd& f_in,
                     const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                     const QPSettings& settings) {
  const int n = static_cast<int>(H_in.rows());
  require(f_in.size() == n && lo.size() == n && hi.size() == n, Errc::precondition,
          "bad box QP dimensions");
  for (int i = 0; i < n; ++i)
    require(lo(i) <= hi(i) + 1e-12, Errc::infeasible, "empty box at index " + std::to_string(i));

  // normalize so tolerances are scale-free; argmin is unchanged
  const double scale = std::max(1e-30, H_in.cwiseAbs().maxCoeff());
  const Eigen::MatrixXd H = (0.5 / scale) * (H_in + H_in.transpose());
  const Eigen::VectorXd f = f_in / scale;

  QPSolution sol;
  sol.duals_eq = Eigen::VectorXd::Zero(0);

  // equivalent general-form problem for the KKT certificate
  QPProblem cert;
  cert.H = H_in;
  cert.f = f_in;
  cert.A_in.resize(2 * n, n);
  cert.A_in << Eigen::MatrixXd::Identity(n, n), -Eigen::MatrixXd::Identity(n, n);
  cert.b_in.resize(2 * n);
  cert.b_in << hi, -lo;
  cert.A_eq.resize(0, n);
  cert.b_eq.resize(0);

  auto finalize = [&](const Eigen::VectorXd& x, const std::vector<int>& side) {
    const Eigen::VectorXd g = scale * (H * x + f);
    sol.u_star = x;
    sol.duals_in = Eigen::VectorXd::Zero(2 * n);
    for (int i = 0; i < n; ++i) {
      if (side[static_cast<std::size_t>(i)] > 0)
        sol.duals_in(i) = std::max(0.0, -g(i));
      else if (side[static_cast<std::size_t>(i)] < 0)
        sol.duals_in(n + i) = std::max(0.0, g(i));
    }
    sol.kkt_residual = kkt_residual(cert, sol.u_star, sol.duals_in, sol.duals_eq);
  };

  // the large problems served here are banded; exact sparse factorizations
  // keep every active-set iteration cheap
  const Eigen::SparseMatrix<double> Hs = H.sparseView(1.0, 0.0);

  // pinned-set solve: variables held at a bound, free block solved exactly
  // (two refinement rounds so the certificate survives bad conditioning)
  std::vector<int> pos_of(static_cast<std::size_t>(n), -1);
  auto eqp_solve = [&](const std::vector<int>& side, Eigen::VectorXd& x) -> bool {
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i) {
      pos_of[static_cast<std::size_t>(i)] = -1;
      if (side[static_cast<std::size_t>(i)] > 0)
        x(i) = hi(i);
      else if (side[static_cast<std::size_t>(i)] < 0)
        x(i) = lo(i);
      else {
        pos_of[static_cast<std::size_t>(i)] = static_cast<int>(free_idx.size());
        free_idx.push_back(i);
      }
    }
    const int nf = static_cast<int>(free_idx.size());
    if (nf == 0) return true;

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(Hs.nonZeros()));
    Eigen::VectorXd rhs(nf);
    for (int a = 0; a < nf; ++a) rhs(a) = -f(free_idx[static_cast<std::size_t>(a)]);
    for (int col = 0; col < n; ++col) {
      const int pc = pos_of[static_cast<std::size_t>(col)];
      for (Eigen::SparseMatrix<double>::InnerIterator it(Hs, col); it; ++it) {
        const int row = static_cast<int>(it.row());
        const int pr = pos_of[static_cast<std::size_t>(row)];
        if (pr >= 0 && pc >= 0)
          trips.emplace_back(pr, pc, it.value());
        else if (pr >= 0 && pc < 0)
          rhs(pr) -= it.value() * x(col);
      }
    }
    Eigen::SparseMatrix<double> Hff(nf, nf);
    Hff.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Hff);
    if (ldlt.info() != Eigen::Success) return false;
    Eigen::VectorXd xf = ldlt.solve(rhs);
    xf += ldlt.solve(rhs - Hff * xf);
    xf += ldlt.solve(rhs - Hff * xf);
    for (int a = 0; a < nf; ++a) x(free_idx[static_cast<std::size_t>(a)]) = xf(a);
    return true;
  };

  // primal-dual active set iteration: pin violated coordinates, release pins
  // whose multiplier sign is wrong; after a detected cycle fall back to one
  // change per iteration, which restores finite termination
  const auto llt = factor_psd(H);
  Eigen::VectorXd x = llt.solve(-f);
  std::vector<int> side(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    side[static_cast<std::size_t>(i)] = x(i) > hi(i) ? 1 : (x(i) < lo(i) ? -1 : 0);

  const int pdas_max = 300 + 6 * n;
  std::vector<std::size_t> seen_hashes;
  bool solved = false;
  bool single_change = false;
  for (int it = 0; it < pdas_max; ++it) {
    sol.iterations = it + 1;
    if (!eqp_solve(side, x)) break;
    const Eigen::VectorXd g = H * x + f;
    const double btol = 1e-12;
    const double gtol = 1e-11;

    int worst_idx = -1;
    int worst_side = 0;
    double worst_mag = 0.0;
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      auto& s = side[static_cast<std::size_t>(i)];
      int want = s;
      double mag = 0.0;
      if (s == 0) {
        if (x(i) > hi(i) + btol) {
          want = 1;
          mag = x(i) - hi(i);
        } else if (x(i) < lo(i) - btol) {
          want = -1;
          mag = lo(i) - x(i);
        }
      } else if (s > 0 && g(i) > gtol) {  // upper pin wants to move inward
        want = 0;
        mag = g(i);
      } else if (s < 0 && g(i) < -gtol) {
        want = 0;
        mag = -g(i);
      }
      if (want != s) {
        if (single_change) {
          if (mag > worst_mag) {
            worst_mag = mag;
            worst_idx = i;
            worst_side = want;
          }
        } else {
          s = want;
        }
        changed = true;
      }
    }
    if (single_change && worst_idx >= 0)
      side[static_cast<std::size_t>(worst_idx)] = worst_side;

    if (!changed) {
      // clamp roundoff and certify
      for (int i = 0; i < n; ++i) x(i) = std::clamp(x(i), lo(i), hi(i));
      finalize(x, side);
      solved = sol.kkt_residual <= 1e-6;
      break;
    }
    if (!single_change) {
      std::size_t hsh = 1469598103934665603ULL;
      for (int i = 0; i < n; ++i)
        hsh = (hsh ^ static_cast<std::size_t>(side[static_cast<std::size_t>(i)] + 2)) *
              1099511628211ULL;
      if (std::find(seen_hashes.begin(), seen_hashes.end(), hsh) != seen_hashes.end())
        single_change = true;
      else
        seen_hashes.push_back(hsh);
    }
  }
  if (solved) {
    sol.status = QPStatus::optimal;
    return sol;
  }

  // fallback: operator splitting to identify the active set, then re-certify
  const int max_iter = settings.max_iter > 0 ? settings.max_iter : 50000;
  double rho = std::max(1e-6, 0.1 * H.diagonal().cwiseAbs().mean());
  Eigen::LLT<Eigen::MatrixXd> allt(H + rho * Eigen::MatrixXd::Identity(n, n));
  x = allt.solve(-f);
  Eigen::VectorXd z = x.cwiseMax(lo).cwiseMin(hi);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z_prev = z;
  int it = 0;
  sol.kkt_residual = std::numeric_limits<double>::infinity();
  while (it < max_iter) {
    for (int k = 0; k < 500 && it < max_iter; ++k, ++it) {
      x = allt.solve(rho * (z - y) - f);
      z_prev = z;
      z = (x + y).cwiseMax(lo).cwiseMin(hi);
      y += x - z;
    }
    // polish the current split
    std::vector<int> aside(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      if (z(i) >= hi(i) - 1e-9 && y(i) > 0)
        aside[static_cast<std::size_t>(i)] = 1;
      else if (z(i) <= lo(i) + 1e-9 && y(i) < 0)
        aside[static_cast<std::size_t>(i)] = -1;
    }
    Eigen::VectorXd xp = z;
    if (eqp_solve(aside, xp)) {
      bool in_bounds = true;
      for (int i = 0; i < n; ++i)
        if (xp(i) < lo(i) - 1e-9 || xp(i) > hi(i) + 1e-9) in_bounds = false;
      if (in_bounds) {
        for (int i = 0; i < n; ++i) xp(i) = std::clamp(xp(i), lo(i), hi(i));
        QPSolution keep = sol;
        finalize(xp, aside);
        if (sol.kkt_residual <= 1e-6) {
          sol.status = QPStatus::optimal;
          sol.iterations += it;
          return sol;
        }
        if (keep.u_star.size() > 0 && keep.kkt_residual < sol.kkt_residual) sol = keep;
      }
    }
    const double rp = (x - z).cwiseAbs().maxCoeff();
    const double rd = rho * (z - z_prev).cwiseAbs().maxCoeff();
    if (rp > 10.0 * rd && rho < 1e7) {
      rho *= 5.0;
      y /= 5.0;
      allt.compute(H + rho * Eigen::MatrixXd::Identity(n, n));
    } else if (rd > 10.0 * rp && rho > 1e-9) {
      rho /= 5.0;
      y *= 5.0;
      allt.compute(H + rho * Eigen::MatrixXd::Identity(n, n));
    }
  }
  if (sol.u_star.size() == 0) {
    sol.u_star = z;
    sol.duals_in = Eigen::VectorXd::Zero(2 * n);
    sol.kkt_residual = kkt_residual(cert, sol.u_star, sol.duals_in, sol.duals_eq);
  }
  sol.status = sol.kkt_residual <= 1e-6 ? QPStatus::optimal : QPStatus::max_iter;
  sol.iterations += it;
  return sol;
}

}  // namespace qp
}  // namespace racer
