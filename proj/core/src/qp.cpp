#include <algorithm>
#include <cmath>

#include "geolab/error.hpp"
#include "geolab/geometry.hpp"

namespace geolab {

ProbeQp::ProbeQp(Matrix constraints, double kappa, QpOptions options)
    : s_(std::move(constraints)), kappa_(kappa), options_(options) {
  if (kappa_ < 0) throw Error(ErrorKind::Argument, "probe qp: kappa must be nonnegative");
  gram_ = s_ * s_.transpose();
  row_norm_ = gram_.rows() > 0 ? std::sqrt(gram_.diagonal().maxCoeff()) : 0.0;
  for (Eigen::Index p = 0; p < gram_.rows(); ++p) {
    if (!(gram_(p, p) > 0)) throw Error(ErrorKind::Argument, "probe qp: constraint row " + std::to_string(p) + " is zero");
  }
}

// Solve the equality system on the current support. Accept only if the
// result is a KKT point of the full problem.
bool ProbeQp::polish(const Vector& h, const Tolerance& tol, Vector& lambda, Vector& residual) const {
  std::vector<Eigen::Index> active;
  for (Eigen::Index p = 0; p < lambda.size(); ++p) {
    if (lambda(p) > 0) active.push_back(p);
  }
  if (active.empty()) return false;
  const auto k = static_cast<Eigen::Index>(active.size());
  Matrix g_aa(k, k);
  Vector h_a(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    h_a(i) = h(active[i]);
    for (Eigen::Index j = 0; j < k; ++j) g_aa(i, j) = gram_(active[i], active[j]);
  }
  const Vector lam_a = g_aa.completeOrthogonalDecomposition().solve(h_a);
  if ((lam_a.array() < 0).any() || !lam_a.allFinite()) return false;

  Vector candidate = Vector::Zero(lambda.size());
  for (Eigen::Index i = 0; i < k; ++i) candidate(active[i]) = lam_a(i);
  const Vector r = gram_ * candidate - h;
  for (Eigen::Index p = 0; p < r.size(); ++p) {
    if (-r(p) > tol.feasibility) return false;
  }
  if (std::abs(candidate.dot(r)) > tol.gap) return false;
  lambda = candidate;
  residual = r;
  return true;
}

// Lawson-Hanson on the dual: grow a passive set by the most violated
// constraint, solve the equality system on it, step back to keep lambda >= 0.
// Passive solves use S_P^T directly (not the Gram matrix) for conditioning.
bool ProbeQp::active_set_finish(const Vector& g, const Vector& h, const Tolerance& tol, Vector& lambda,
                                Vector& residual) const {
  const Eigen::Index n = h.size();
  const double enter_tol = 0.1 * tol.feasibility;
  Vector x = Vector::Zero(n);
  std::vector<char> passive(static_cast<std::size_t>(n), 0);
  std::vector<char> blocked(static_cast<std::size_t>(n), 0);
  Vector w = h;

  // argmin_z 1/2 |A z - g|^2 - kappa 1'z with A = S_P^T: z = A+ (g + kappa (A^T)+ 1).
  auto solve_passive = [&](Vector& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index p = 0; p < n; ++p) {
      if (passive[static_cast<std::size_t>(p)]) idx.push_back(p);
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    z = Vector::Zero(n);
    if (k == 0) return;
    Matrix a(s_.cols(), k);
    for (Eigen::Index i = 0; i < k; ++i) a.col(i) = s_.row(idx[i]).transpose();
    const auto cod = a.completeOrthogonalDecomposition();
    Vector target = g;
    if (kappa_ > 0) {
      const Matrix at = a.transpose();
      target += kappa_ * at.completeOrthogonalDecomposition().solve(Vector::Ones(k));
    }
    const Vector sol = cod.solve(target);
    for (Eigen::Index i = 0; i < k; ++i) z(idx[i]) = sol(i);
  };

  const int max_outer = static_cast<int>(3 * n + 30);
  for (int outer = 0; outer < max_outer; ++outer) {
    Eigen::Index best = -1;
    double best_w = enter_tol;
    for (Eigen::Index p = 0; p < n; ++p) {
      const auto up = static_cast<std::size_t>(p);
      if (!passive[up] && !blocked[up] && w(p) > best_w) {
        best_w = w(p);
        best = p;
      }
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = 1;

    Vector z;
    solve_passive(z);
    if (z(best) <= 0.0) {
      // Entering constraint is numerically redundant with the passive set.
      passive[static_cast<std::size_t>(best)] = 0;
      blocked[static_cast<std::size_t>(best)] = 1;
      continue;
    }
    for (Eigen::Index inner = 0; inner <= n; ++inner) {
      double alpha = 1.0;
      Eigen::Index blocking = -1;
      for (Eigen::Index p = 0; p < n; ++p) {
        if (passive[static_cast<std::size_t>(p)] && z(p) <= 0.0) {
          const double step = x(p) / (x(p) - z(p));
          if (blocking < 0 || step < alpha) {
            alpha = step;
            blocking = p;
          }
        }
      }
      if (blocking < 0) break;
      x += alpha * (z - x);
      x(blocking) = 0.0;
      for (Eigen::Index p = 0; p < n; ++p) {
        if (passive[static_cast<std::size_t>(p)] && x(p) <= 0.0) {
          passive[static_cast<std::size_t>(p)] = 0;
          x(p) = 0.0;
        }
      }
      solve_passive(z);
    }
    x = z.cwiseMax(0.0);
    w = h - gram_ * x;
    std::fill(blocked.begin(), blocked.end(), 0);
  }

  const Vector r = gram_ * x - h;
  for (Eigen::Index p = 0; p < n; ++p) {
    if (-r(p) > tol.feasibility) return false;
  }
  if (std::abs(x.dot(r)) > tol.gap) return false;
  lambda = x;
  residual = r;
  return true;
}

ProbeSolution ProbeQp::solve(const Vector& g) const {
  if (g.size() != s_.cols()) throw Error(ErrorKind::Argument, "probe qp: probe dimension mismatch");
  const Eigen::Index n = s_.rows();
  // Dual: min_{lambda >= 0} 1/2 lambda' G lambda - h' lambda, h = S g + kappa.
  const Vector h = (s_ * g).array() + kappa_;

  // Tolerances are absolute at unit scale and grow with |g| and the largest row norm.
  const double g_norm = g.norm();
  const double scale = std::max(1.0, g_norm * std::max(g_norm, row_norm_));
  const Tolerance tol{options_.gap_tol * scale, options_.feasibility_tol * scale};
  ProbeSolution sol;
  Vector lambda = Vector::Zero(n);
  Vector residual = -h;  // G lambda - h; equals -(S v + kappa)

  auto converged = [&](double& gap) {
    gap = std::abs(lambda.dot(residual));
    if (gap > tol.gap) return false;
    for (Eigen::Index p = 0; p < n; ++p) {
      if (-residual(p) > tol.feasibility) return false;
    }
    return true;
  };

  double gap = 0.0;
  int sweep = 0;
  if (!converged(gap)) {
    for (sweep = 1;; ++sweep) {
      for (Eigen::Index p = 0; p < n; ++p) {
        const double next = std::max(0.0, lambda(p) - residual(p) / gram_(p, p));
        const double step = next - lambda(p);
        if (step != 0.0) {
          lambda(p) = next;
          residual.noalias() += step * gram_.col(p);
        }
      }
      if (converged(gap)) break;
      if (options_.polish_every > 0 && sweep % options_.polish_every == 0 && polish(h, tol, lambda, residual)) {
        gap = std::abs(lambda.dot(residual));
        break;
      }
      if (sweep == options_.finish_after && active_set_finish(g, h, tol, lambda, residual)) {
        gap = std::abs(lambda.dot(residual));
        break;
      }
      if (sweep >= options_.max_sweeps) {
        throw Error(ErrorKind::Numeric, "probe qp: no convergence after " + std::to_string(sweep) +
                                            " sweeps (duality gap " + format_real(gap) + ")");
      }
    }
  }

  const Vector shift = s_.transpose() * lambda;
  sol.v_star = g - shift;
  sol.multipliers = std::move(lambda);
  sol.adjustment = shift.squaredNorm();
  sol.gap = gap;
  sol.sweeps = sweep;
  const double total = sol.multipliers.sum();
  if (total > 1e-12) sol.anchor = shift / total;
  return sol;
}

ProbeSolution solve_probe_qp(const Matrix& s, const Vector& g, double kappa, const QpOptions& options) {
  return ProbeQp(s, kappa, options).solve(g);
}

KktResidual kkt_residual(const Matrix& s, const Vector& g, double kappa, const ProbeSolution& sol) {
  KktResidual out;
  const Vector margin = (s * sol.v_star).array() + kappa;
  for (Eigen::Index p = 0; p < margin.size(); ++p) {
    out.primal = std::max(out.primal, margin(p));
    out.slackness = std::max(out.slackness, std::abs(sol.multipliers(p) * margin(p)));
    out.dual = std::max(out.dual, -sol.multipliers(p));
  }
  out.stationarity = (sol.v_star - g + s.transpose() * sol.multipliers).norm();
  return out;
}

}  // namespace geolab
