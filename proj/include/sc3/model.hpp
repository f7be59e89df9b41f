#pragma once

#include <Eigen/Dense>

#include "sc3/errors.hpp"

namespace sc3 {

// Full LTI plant description. Q, R symmetric PSD, Sigma_v symmetric PD.
struct ControlSystem {
  int n = 0;  // state dimension
  int m = 0;  // input dimension
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd Sigma_v;
};

struct RiccatiSolution {
  Eigen::MatrixXd S;
  Eigen::MatrixXd M;
  double residual = 0.0;
  int iterations = 0;
};

// Reduced per-loop description: everything the cost bound needs.
struct LoopCostParams {
  double e = 0.0;                // intrinsic entropy, bits per cycle
  int n = 1;                     // state dimension
  double negentropy_scale = 1.0; // N(v) for Gaussian noise
  double det_M_root = 1.0;       // |det M|^{1/n}
  double trace_term = 0.0;       // Tr(Sigma_v S)
};

// log2|det A|. Throws DomainError when A is singular.
double intrinsic_entropy(const Eigen::MatrixXd& A);

// det(Sigma)^{1/n}: the Gaussian closed form of the negentropy scale.
// Throws DomainError when Sigma is not positive definite.
double gaussian_negentropy_scale(const Eigen::MatrixXd& Sigma, int n);

// Fixed-point iteration of the coupled discrete-time Riccati equations,
// initialized at S = Q. Residual is the max-norm of both equation defects.
RiccatiSolution solve_riccati(const ControlSystem& sys, double tol = 1e-10,
                              int max_iter = 100000);

// Closed-loop negentropy rate: min(rho * D_u, D_d).
double cner(double d_u, double d_d, double rho);

// Stable iff CNER strictly exceeds the intrinsic entropy.
bool is_stable(double d_sc3, double e);

// Margin below which the bound is treated as divergent.
inline constexpr double kStabilityGuardBits = 1e-9;

// Lower bound on the LQR cost at a given CNER. Throws StabilityError when
// unstable, NearSingularError when within the guard band of the boundary.
double lqr_lower_bound(double d_sc3, const LoopCostParams& p);

// Derivative and second derivative of the bound in D (stable region only).
double lqr_lower_bound_d1(double d_sc3, const LoopCostParams& p);
double lqr_lower_bound_d2(double d_sc3, const LoopCostParams& p);

// Derives the reduced parameters from a full system description.
LoopCostParams loop_cost_params(const ControlSystem& sys, double riccati_tol = 1e-10,
                                int riccati_max_iter = 100000);

}  // namespace sc3
