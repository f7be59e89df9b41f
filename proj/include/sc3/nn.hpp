#pragma once

#include <Eigen/Dense>

#include "sc3/rng.hpp"

namespace sc3 {

// Fully connected layer with gradient and adaptive-moment state.
// Rows of the activation matrices are samples.
struct Linear {
  Eigen::MatrixXd W;   // out x in
  Eigen::VectorXd b;   // out
  Eigen::MatrixXd gW;
  Eigen::VectorXd gb;
  Eigen::MatrixXd mW, vW;
  Eigen::VectorXd mb, vb;

  void init(int out, int in, Rng& rng);
  void zero_grad();

  // X: N x in -> N x out (pre-activation).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const;
  // Accumulates gW, gb from dY (N x out) and the cached input; returns dX.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& X, const Eigen::MatrixXd& dY);
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One adaptive-moment update from the accumulated gradients; t is the
// 1-based update counter used for bias correction.
void adam_step(Linear& layer, double lr, const AdamParams& p, int t);

Eigen::MatrixXd leaky_relu(const Eigen::MatrixXd& pre, double slope);
// Gradient through the activation given pre-activation values.
Eigen::MatrixXd leaky_relu_backward(const Eigen::MatrixXd& pre,
                                    const Eigen::MatrixXd& dpost, double slope);

}  // namespace sc3
