#include "sc3/ipm.hpp"

#include <cmath>
#include <limits>

namespace sc3 {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

IpmResult solve_barrier(const SmoothProblem& prob, Eigen::VectorXd z0,
                        const IpmOptions& opts) {
  const int n = prob.dim();
  const int m = prob.num_constraints();
  if (z0.size() != n) throw DomainError("solve_barrier: z0 dimension mismatch");
  if (prob.min_slack(z0) <= 0.0)
    throw DomainError("solve_barrier: z0 is not strictly feasible");

  IpmResult res;
  res.z = std::move(z0);

  double f0 = prob.objective(res.z, nullptr, nullptr);
  double t = static_cast<double>(m) / std::max(1.0, std::abs(f0));

  Eigen::VectorXd grad(n), dz(n);
  Eigen::MatrixXd hess(n, n);

  auto merit = [&](const Eigen::VectorXd& z, double tt) {
    if (prob.min_slack(z) <= 0.0) return kInf;
    const double phi = prob.barrier(z, nullptr, nullptr);
    const double f = prob.objective(z, nullptr, nullptr);
    return tt * f + phi;
  };

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    res.outer = outer + 1;
    // Newton centering for F(z) = t f0(z) + phi(z).
    for (int inner = 0; inner < opts.max_inner; ++inner) {
      grad.setZero();
      hess.setZero();
      const double f = prob.objective(res.z, &grad, &hess);
      grad *= t;
      hess *= t;
      const double phi = prob.barrier(res.z, &grad, &hess);
      if (!std::isfinite(phi) || !std::isfinite(f)) break;

      double ridge = 0.0;
      bool solved = false;
      for (int attempt = 0; attempt < 8 && !solved; ++attempt) {
        Eigen::MatrixXd h = hess;
        if (ridge > 0.0) h.diagonal().array() += ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
        if (ldlt.info() == Eigen::Success) {
          dz = ldlt.solve(-grad);
          if (dz.allFinite() && grad.dot(dz) < 0.0) solved = true;
        }
        if (!solved) ridge = (ridge == 0.0) ? 1e-10 * hess.diagonal().maxCoeff() : ridge * 100.0;
      }
      if (!solved) break;

      const double lambda2 = -grad.dot(dz);
      res.decrement = 0.5 * lambda2;
      if (res.decrement <= opts.newton_tol * std::max(1.0, t)) break;
      ++res.newton_iters;

      const double F0 = t * f + phi;
      double alpha = 1.0;
      bool stepped = false;
      for (int bt = 0; bt < 80; ++bt) {
        const Eigen::VectorXd cand = res.z + alpha * dz;
        const double Fc = merit(cand, t);
        if (Fc <= F0 + 0.3 * alpha * grad.dot(dz)) {
          res.z = cand;
          stepped = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!stepped) break;  // stalled; centering is as good as it gets
    }

    f0 = prob.objective(res.z, nullptr, nullptr);
    res.gap = static_cast<double>(m) / t;
    if (res.gap <= opts.gap_tol * std::max(1.0, std::abs(f0))) {
      res.converged = true;
      return res;
    }
    t *= opts.mu_factor;
  }
  return res;
}

}  // namespace sc3
