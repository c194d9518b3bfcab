#include "lrhp/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "lrhp/util.hpp"

namespace lrhp {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) fail(ErrorCategory::invalid_request, std::string(what) + ": non-finite input");
}

}  // namespace

double bt_reward_loss(double r_w, double r_l) {
  require_finite(r_w, "bt_reward_loss");
  require_finite(r_l, "bt_reward_loss");
  return softplus(-(r_w - r_l));
}

PairLoss bt_reward_loss_grad(double r_w, double r_l) {
  const double gap = r_w - r_l;
  const double s = sigmoid(-gap);
  return {bt_reward_loss(r_w, r_l), -s, s};
}

double bce_classification_loss(double logit, int label) {
  require_finite(logit, "bce_classification_loss");
  require(label == 0 || label == 1, ErrorCategory::invalid_request, "bce_classification_loss: label must be 0 or 1");
  return label == 1 ? softplus(-logit) : softplus(logit);
}

double bce_classification_grad(double logit, int label) { return sigmoid(logit) - static_cast<double>(label); }

void DPOConfig::validate() const {
  require(beta > 0.0 && std::isfinite(beta), ErrorCategory::validation, "dpo: beta must be positive");
  require(std::isfinite(fixed_margin), ErrorCategory::validation, "dpo: fixed margin must be finite");
  require(fixed_margin >= 0.0, ErrorCategory::validation, "dpo: fixed margin must be >= 0");
}

double dpo_loss(double lr_w, double lr_l, double beta) {
  require_finite(lr_w, "dpo_loss");
  require_finite(lr_l, "dpo_loss");
  require(beta > 0.0, ErrorCategory::invalid_request, "dpo_loss: beta must be positive");
  return softplus(-(beta * lr_w - beta * lr_l));
}

double constrained_dpo_loss(double lr_w, double lr_l, double beta, double margin) {
  require_finite(lr_w, "constrained_dpo_loss");
  require_finite(lr_l, "constrained_dpo_loss");
  require_finite(margin, "constrained_dpo_loss");
  require(beta > 0.0, ErrorCategory::invalid_request, "constrained_dpo_loss: beta must be positive");
  require(margin >= 0.0, ErrorCategory::invalid_request, "constrained_dpo_loss: margin must be >= 0");
  return softplus(-(beta * lr_w - beta * lr_l - margin));
}

PairLoss constrained_dpo_loss_grad(double lr_w, double lr_l, double beta, double margin) {
  const double value = constrained_dpo_loss(lr_w, lr_l, beta, margin);
  const double s = sigmoid(-(beta * lr_w - beta * lr_l - margin));
  return {value, -beta * s, beta * s};
}

double mse_margin_loss(double pred, double target) {
  require_finite(pred, "mse_margin_loss");
  require_finite(target, "mse_margin_loss");
  const double e = pred - target;
  return e * e;
}

double mse_margin_grad(double pred, double target) { return 2.0 * (pred - target); }

std::string GradCheckReport::to_text() const {
  std::ostringstream out;
  out << "# parameter analytic numeric rel_error\n";
  for (const auto& e : entries)
    out << e.name << ' ' << format_double(e.analytic) << ' ' << format_double(e.numeric) << ' '
        << format_double(e.rel_error) << '\n';
  out << "# max_rel_error " << format_double(max_rel_error) << " at " << worst_name << " (tolerance "
      << format_double(tolerance) << ", " << (passed() ? "PASS" : "FAIL") << ")\n";
  return out.str();
}

GradCheckReport grad_check(const LossGraph& graph, VectorXd& params, const GradCheckOptions& options) {
  require(options.eps >= 1e-6 && options.eps <= 1e-3, ErrorCategory::invalid_request,
          "grad_check: eps must lie in [1e-6, 1e-3]");
  VectorXd analytic = VectorXd::Zero(params.size());
  graph(params, &analytic);
  require(analytic.allFinite(), ErrorCategory::divergence, "grad_check: non-finite analytic gradient");

  std::vector<Eigen::Index> indices;
  if (options.probes <= 0 || options.probes >= params.size()) {
    indices.resize(static_cast<std::size_t>(params.size()));
    std::iota(indices.begin(), indices.end(), Eigen::Index{0});
  } else {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, params.size() - 1);
    for (int i = 0; i < options.probes; ++i) indices.push_back(pick(rng));
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (Eigen::Index i : indices) {
    const double saved = params[i];
    params[i] = saved + options.eps;
    const double up = graph(params, nullptr);
    params[i] = saved - options.eps;
    const double down = graph(params, nullptr);
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * options.eps);
    require(std::isfinite(numeric), ErrorCategory::divergence, "grad_check: non-finite numeric gradient");
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    GradCheckEntry e{i, options.name_of ? options.name_of(i) : "p[" + std::to_string(i) + "]", a, numeric,
                     std::abs(a - numeric) / denom};
    if (report.entries.empty() || e.rel_error > report.max_rel_error) {
      report.max_rel_error = e.rel_error;
      report.worst_name = e.name;
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace lrhp
