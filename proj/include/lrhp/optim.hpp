#pragma once

#include <cmath>

#include "lrhp/types.hpp"

namespace lrhp {

struct OptimizerConfig {
  enum class Kind { sgd, adam };

  Kind kind = Kind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Plain SGD or Adam with bias correction:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
template <typename Scalar>
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, Eigen::Index n)
      : config_(config), m_(Vector<Scalar>::Zero(n)), v_(Vector<Scalar>::Zero(n)) {}

  void step(Vector<Scalar>& params, const Vector<Scalar>& grad, double learning_rate) {
    ++t_;
    const Scalar lr = static_cast<Scalar>(learning_rate);
    if (config_.kind == OptimizerConfig::Kind::sgd) {
      params -= lr * grad;
      return;
    }
    const Scalar b1 = static_cast<Scalar>(config_.beta1);
    const Scalar b2 = static_cast<Scalar>(config_.beta2);
    const Scalar eps = static_cast<Scalar>(config_.epsilon);
    m_ = b1 * m_ + (Scalar(1) - b1) * grad;
    v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
    const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(config_.beta1, t_));
    const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(config_.beta2, t_));
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
  }

  int steps() const { return t_; }

 private:
  OptimizerConfig config_;
  Vector<Scalar> m_;
  Vector<Scalar> v_;
  int t_ = 0;
};

}  // namespace lrhp
