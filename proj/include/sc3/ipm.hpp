#pragma once

#include <Eigen/Dense>

#include "sc3/errors.hpp"

namespace sc3 {

// Smooth convex program in standard form: minimize f0(z) subject to
// c_i(z) > 0 with every c_i concave. The problem supplies its own barrier
// assembly so structure can be exploited.
class SmoothProblem {
 public:
  virtual ~SmoothProblem() = default;
  virtual int dim() const = 0;
  virtual int num_constraints() const = 0;
  // f0(z); adds into *grad / *hess when non-null.
  virtual double objective(const Eigen::VectorXd& z, Eigen::VectorXd* grad,
                           Eigen::MatrixXd* hess) const = 0;
  // min_i c_i(z); <= 0 means z is outside the domain.
  virtual double min_slack(const Eigen::VectorXd& z) const = 0;
  // phi(z) = -sum_i ln c_i(z); +inf outside the domain. Adds into
  // *grad / *hess when non-null.
  virtual double barrier(const Eigen::VectorXd& z, Eigen::VectorXd* grad,
                         Eigen::MatrixXd* hess) const = 0;
};

struct IpmOptions {
  double gap_tol = 1e-6;     // relative duality-measure target
  double newton_tol = 1e-9;  // centering accuracy in objective units
  int max_outer = 50;
  int max_inner = 200;
  double mu_factor = 10.0;   // geometric barrier increase
};

struct IpmResult {
  Eigen::VectorXd z;
  bool converged = false;
  int outer = 0;
  int newton_iters = 0;
  double gap = 0.0;        // m / t at exit
  double decrement = 0.0;  // last Newton decrement (lambda^2 / 2)
};

// Log-barrier method with damped Newton centering and backtracking line
// search. z0 must be strictly feasible.
IpmResult solve_barrier(const SmoothProblem& prob, Eigen::VectorXd z0,
                        const IpmOptions& opts = {});

}  // namespace sc3
