#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lrhp/types.hpp"

namespace lrhp {

/// log(1 + e^x) without overflow. softplus(0) is exactly ln 2.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Loss value with its derivatives with respect to the two scalar inputs.
struct PairLoss {
  double value = 0.0;
  double d_first = 0.0;
  double d_second = 0.0;
};

/// -log sigmoid(r_w - r_l).
double bt_reward_loss(double r_w, double r_l);
PairLoss bt_reward_loss_grad(double r_w, double r_l);

/// -log sigmoid(logit) for label 1, -log sigmoid(-logit) for label 0.
double bce_classification_loss(double logit, int label);
double bce_classification_grad(double logit, int label);

struct DPOConfig {
  enum class MarginSource { none, fixed, per_pair };

  double beta = 0.1;
  MarginSource margin_source = MarginSource::none;
  double fixed_margin = 0.0;

  void validate() const;
};

/// -log sigmoid(beta*lr_w - beta*lr_l) on policy-vs-reference log-ratios.
double dpo_loss(double lr_w, double lr_l, double beta);
/// -log sigmoid(beta*lr_w - beta*lr_l - margin); margin must be >= 0.
double constrained_dpo_loss(double lr_w, double lr_l, double beta, double margin);
PairLoss constrained_dpo_loss_grad(double lr_w, double lr_l, double beta, double margin);

double mse_margin_loss(double pred, double target);
double mse_margin_grad(double pred, double target);

/// Cross-entropy of softmax(logits) against `answer`.
template <typename Scalar>
double ntp_answer_loss(const RowVector<Scalar>& logits, TokenId answer) {
  require(answer >= 0 && answer < logits.size(), ErrorCategory::invalid_request,
          "ntp_answer_loss: answer id " + std::to_string(answer) + " out of range");
  require(logits.allFinite(), ErrorCategory::invalid_request, "ntp_answer_loss: non-finite logits");
  const RowVector<double> z = logits.template cast<double>();
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return lse - z(answer);
}

/// softmax(logits) - onehot(answer).
template <typename Scalar>
RowVector<Scalar> ntp_answer_grad(const RowVector<Scalar>& logits, TokenId answer) {
  const RowVector<double> z = logits.template cast<double>();
  RowVector<double> p = (z.array() - z.maxCoeff()).exp();
  p /= p.sum();
  p(answer) -= 1.0;
  return p.template cast<Scalar>();
}

// Gradient verification

/// Evaluates the loss at `params`; when `grad` is non-null also writes the
/// analytic gradient (same size as params) into it.
using LossGraph = std::function<double(const VectorXd& params, VectorXd* grad)>;

struct GradCheckEntry {
  Eigen::Index index = 0;
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  /// Number of randomly probed coordinates; 0 probes every coordinate.
  int probes = 100;
  std::uint64_t seed = 0;
  std::function<std::string(Eigen::Index)> name_of;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_name;
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error <= tolerance; }
  /// One line per probe: name, analytic, numeric, relative error.
  std::string to_text() const;
};

/// Central-difference check of the analytic gradient of `graph` at `params`.
/// `params` is perturbed in place and restored before returning.
GradCheckReport grad_check(const LossGraph& graph, VectorXd& params, const GradCheckOptions& options = {});

}  // namespace lrhp
