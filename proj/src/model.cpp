#include "sc3/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace sc3 {

namespace {

// log|det A| via LU; returns -inf for singular input.
double log_abs_det(const Eigen::MatrixXd& a) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  double acc = 0.0;
  const auto& u = lu.matrixLU();
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double d = std::abs(u(i, i));
    if (d == 0.0) return -std::numeric_limits<double>::infinity();
    acc += std::log(d);
  }
  return acc;
}

double max_abs(const Eigen::MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

double intrinsic_entropy(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols() || A.rows() == 0)
    throw DomainError("intrinsic_entropy: A must be square and non-empty");
  const double lad = log_abs_det(A);
  if (!std::isfinite(lad)) throw DomainError("intrinsic_entropy: A is singular");
  return lad / std::numbers::ln2;
}

double gaussian_negentropy_scale(const Eigen::MatrixXd& Sigma, int n) {
  if (n <= 0) throw DomainError("gaussian_negentropy_scale: n must be positive");
  if (Sigma.rows() != n || Sigma.cols() != n)
    throw DomainError("gaussian_negentropy_scale: Sigma must be n x n");
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success)
    throw DomainError("gaussian_negentropy_scale: Sigma is not positive definite");
  double logdet = 0.0;
  const auto& l = llt.matrixL();
  for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(l(i, i));
  return std::exp(logdet / n);
}

RiccatiSolution solve_riccati(const ControlSystem& sys, double tol, int max_iter) {
  if (tol <= 0.0) throw DomainError("solve_riccati: tol must be positive");
  if (max_iter < 1) throw DomainError("solve_riccati: max_iter must be >= 1");
  const int n = sys.n;
  const Eigen::MatrixXd& A = sys.A;
  const Eigen::MatrixXd& B = sys.B;
  const Eigen::MatrixXd& Q = sys.Q;
  const Eigen::MatrixXd& R = sys.R;

  Eigen::MatrixXd S = Q;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  double residual = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < max_iter; ++it) {
    const Eigen::MatrixXd SB = S * B;
    Eigen::MatrixXd G = R + B.transpose() * SB;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
      // With R strictly PD this cannot happen; the degenerate case is R = 0.
      throw DomainError("solve_riccati: R + B^T S B is singular");
    }
    M = SB * ldlt.solve(SB.transpose());
    M = 0.5 * (M + M.transpose());
    Eigen::MatrixXd S_next = Q + A.transpose() * (S - M) * A;
    S_next = 0.5 * (S_next + S_next.transpose());
    S = S_next;
    // Full fixed-point residuals of both equations at (S, M).
    const Eigen::MatrixXd SB2 = S * B;
    Eigen::MatrixXd G2 = R + B.transpose() * SB2;
    Eigen::LDLT<Eigen::MatrixXd> ldlt2(G2);
    double rM = std::numeric_limits<double>::infinity();
    if (ldlt2.info() == Eigen::Success)
      rM = max_abs(M - SB2 * ldlt2.solve(SB2.transpose()));
    const double rS = max_abs(S - Q - A.transpose() * (S - M) * A);
    residual = std::max(rS, rM);
    if (residual <= tol) break;
  }
  if (residual > tol) {
    std::ostringstream msg;
    msg << "solve_riccati: no convergence after " << max_iter
        << " iterations, residual " << residual;
    throw IterationLimitError(msg.str(), residual);
  }
  return RiccatiSolution{S, M, residual, it + 1};
}

double cner(double d_u, double d_d, double rho) {
  if (d_u < 0.0 || d_d < 0.0) throw DomainError("cner: rates must be nonnegative");
  if (rho < 0.0 || rho > 1.0) throw DomainError("cner: rho must lie in [0, 1]");
  return std::min(rho * d_u, d_d);
}

bool is_stable(double d_sc3, double e) { return d_sc3 > e; }

double lqr_lower_bound(double d_sc3, const LoopCostParams& p) {
  if (!is_stable(d_sc3, p.e))
    throw StabilityError("lqr_lower_bound: CNER does not exceed intrinsic entropy");
  const double gap = d_sc3 - p.e;
  if (gap < kStabilityGuardBits)
    throw NearSingularError("lqr_lower_bound: CNER within guard band of the boundary");
  // denom = 2^{(2/n) gap} - 1, computed via expm1 for small gaps.
  const double theta = 2.0 * std::numbers::ln2 / p.n;
  const double denom = std::expm1(theta * gap);
  return p.n * p.negentropy_scale * p.det_M_root / denom + p.trace_term;
}

double lqr_lower_bound_d1(double d_sc3, const LoopCostParams& p) {
  const double theta = 2.0 * std::numbers::ln2 / p.n;
  const double w = std::exp(theta * (d_sc3 - p.e));
  const double denom = std::expm1(theta * (d_sc3 - p.e));
  const double c = p.n * p.negentropy_scale * p.det_M_root;
  return -c * theta * w / (denom * denom);
}

double lqr_lower_bound_d2(double d_sc3, const LoopCostParams& p) {
  const double theta = 2.0 * std::numbers::ln2 / p.n;
  const double w = std::exp(theta * (d_sc3 - p.e));
  const double denom = std::expm1(theta * (d_sc3 - p.e));
  const double c = p.n * p.negentropy_scale * p.det_M_root;
  return c * theta * theta * w * (w + 1.0) / (denom * denom * denom);
}

LoopCostParams loop_cost_params(const ControlSystem& sys, double riccati_tol,
                                int riccati_max_iter) {
  LoopCostParams out;
  out.n = sys.n;
  out.e = intrinsic_entropy(sys.A);
  out.negentropy_scale = gaussian_negentropy_scale(sys.Sigma_v, sys.n);
  const RiccatiSolution ric = solve_riccati(sys, riccati_tol, riccati_max_iter);
  const double lad = [&] {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(ric.M);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < sys.n; ++i) {
      const double d = std::abs(lu.matrixLU()(i, i));
      if (d == 0.0) return -std::numeric_limits<double>::infinity();
      acc += std::log(d);
    }
    return acc;
  }();
  out.det_M_root = std::isfinite(lad) ? std::exp(lad / sys.n) : 0.0;
  out.trace_term = (sys.Sigma_v * ric.S).trace();
  return out;
}

}  // namespace sc3
