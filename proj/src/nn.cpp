#include "sc3/nn.hpp"

#include <cmath>

namespace sc3 {

void Linear::init(int out, int in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  W.resize(out, in);
  b.resize(out);
  for (int i = 0; i < out; ++i) {
    for (int j = 0; j < in; ++j) W(i, j) = rng.uniform(-bound, bound);
  }
  for (int i = 0; i < out; ++i) b(i) = rng.uniform(-bound, bound);
  gW = Eigen::MatrixXd::Zero(out, in);
  gb = Eigen::VectorXd::Zero(out);
  mW = Eigen::MatrixXd::Zero(out, in);
  vW = Eigen::MatrixXd::Zero(out, in);
  mb = Eigen::VectorXd::Zero(out);
  vb = Eigen::VectorXd::Zero(out);
}

void Linear::zero_grad() {
  gW.setZero();
  gb.setZero();
}

Eigen::MatrixXd Linear::forward(const Eigen::MatrixXd& X) const {
  return (X * W.transpose()).rowwise() + b.transpose();
}

Eigen::MatrixXd Linear::backward(const Eigen::MatrixXd& X, const Eigen::MatrixXd& dY) {
  gW.noalias() += dY.transpose() * X;
  gb.noalias() += dY.colwise().sum().transpose();
  return dY * W;
}

void adam_step(Linear& layer, double lr, const AdamParams& p, int t) {
  const double bc1 = 1.0 - std::pow(p.beta1, t);
  const double bc2 = 1.0 - std::pow(p.beta2, t);
  auto update = [&](auto& w, const auto& g, auto& m, auto& v) {
    m = p.beta1 * m + (1.0 - p.beta1) * g;
    v = p.beta2 * v + (1.0 - p.beta2) * g.cwiseProduct(g);
    w.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + p.eps);
  };
  update(layer.W, layer.gW, layer.mW, layer.vW);
  update(layer.b, layer.gb, layer.mb, layer.vb);
}

Eigen::MatrixXd leaky_relu(const Eigen::MatrixXd& pre, double slope) {
  return pre.unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
}

Eigen::MatrixXd leaky_relu_backward(const Eigen::MatrixXd& pre,
                                    const Eigen::MatrixXd& dpost, double slope) {
  return dpost.cwiseProduct(
      pre.unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; }));
}

}  // namespace sc3
