#include "lrhp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "lrhp/align_eval.hpp"
#include "lrhp/util.hpp"

namespace lrhp {

void TrainConfig::validate(std::size_t dataset_size) const {
  require(learning_rate > 0.0, ErrorCategory::validation, "train: learning_rate must be positive");
  require(batch_size >= 1, ErrorCategory::validation, "train: batch_size must be >= 1");
  require(max_steps >= 1, ErrorCategory::validation, "train: max_steps must be >= 1");
  require(eval_every >= 0, ErrorCategory::validation, "train: eval_every must be >= 0");
  require(dataset_size >= 1, ErrorCategory::validation, "train: empty dataset");
  require(static_cast<std::size_t>(batch_size) <= dataset_size, ErrorCategory::validation,
          "train: batch_size " + std::to_string(batch_size) + " exceeds dataset size " + std::to_string(dataset_size));
}

void MetricLog::record(int step, double loss, std::vector<std::optional<double>> metrics) {
  require(metrics.size() == names_.size(), ErrorCategory::validation, "metric log: wrong number of metrics");
  rows_.push_back({step, loss, std::move(metrics)});
}

std::optional<double> MetricLog::last(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  const auto k = static_cast<std::size_t>(it - names_.begin());
  for (auto r = rows_.rbegin(); r != rows_.rend(); ++r)
    if (r->metrics[k]) return r->metrics[k];
  return std::nullopt;
}

std::string MetricLog::to_csv() const {
  std::ostringstream out;
  out << "step,loss";
  for (const auto& n : names_) out << ',' << n;
  out << '\n';
  for (const auto& r : rows_) {
    out << r.step << ',' << format_double(r.loss);
    for (const auto& m : r.metrics) {
      out << ',';
      if (m) out << format_double(*m);
    }
    out << '\n';
  }
  return out.str();
}

namespace {

template <typename Item>
using LossFn = std::function<double(const Model&, const Item&, VectorXf* grad)>;
using EvalFn = std::function<std::vector<std::optional<double>>(const Model&)>;

/// Minibatch loop shared by every trainer. Batches walk seeded per-epoch
/// permutations; per-example gradients land in per-slot buffers and are
/// summed in slot order, so results are independent of the thread count.
template <typename Item>
void run_loop(Model& model, const std::vector<Item>& data, const TrainConfig& cfg, const LossFn<Item>& loss_fn,
              const EvalFn& eval, MetricLog& log, int step_offset = 0) {
  cfg.validate(data.size());
  Optimizer<float> opt(cfg.optimizer, model.params().size());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::size_t cursor = 0;

  const auto B = static_cast<std::size_t>(cfg.batch_size);
  std::vector<VectorXf> slot_grads(B, VectorXf::Zero(model.params().size()));
  std::vector<double> slot_loss(B, 0.0);
  std::vector<std::size_t> batch(B);
  VectorXf grad(model.params().size());

  for (int step = 1; step <= cfg.max_steps; ++step) {
    for (std::size_t b = 0; b < B; ++b) {
      if (cursor == perm.size()) {
        std::shuffle(perm.begin(), perm.end(), rng);
        cursor = 0;
      }
      batch[b] = perm[cursor++];
    }
    parallel_for(B, cfg.threads, [&](std::size_t b) {
      slot_grads[b].setZero();
      slot_loss[b] = loss_fn(model, data[batch[b]], &slot_grads[b]);
    });
    grad.setZero();
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      grad += slot_grads[b];
      loss += slot_loss[b];
    }
    grad /= static_cast<float>(B);
    loss /= static_cast<double>(B);
    const int global_step = step_offset + step;
    if (!std::isfinite(loss) || !grad.allFinite())
      fail(ErrorCategory::divergence, "training diverged at step " + std::to_string(global_step) + " (non-finite loss)");
    opt.step(model.params(), grad, cfg.learning_rate);
    if (!model.params().allFinite())
      fail(ErrorCategory::divergence, "training diverged at step " + std::to_string(global_step) + " (non-finite parameters)");

    const bool do_eval = eval && (step == cfg.max_steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0));
    if (do_eval) {
      log.record(global_step, loss, eval(model));
    } else {
      log.record(global_step, loss);
    }
  }
}

}  // namespace

double classification_accuracy(const Model& model, const std::vector<ClassifierExample>& examples, int threads) {
  require(!examples.empty(), ErrorCategory::invalid_request, "classification_accuracy: empty set");
  std::vector<char> hit(examples.size(), 0);
  parallel_for(examples.size(), threads, [&](std::size_t i) { hit[i] = classify(model, examples[i]) == examples[i].label; });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(examples.size());
}

TrainResult train_representation(const TrainConfig& config, const std::vector<ClassifierExample>& train,
                                 const EncoderConfig& encoder, const std::vector<ClassifierExample>& held_out) {
  const HeadSet heads = encoder.representation_mode == RepresentationMode::ntp ? HeadSet{Head::lm} : HeadSet{Head::classifier};
  TrainResult result{Model(encoder, heads), MetricLog({"heldout_accuracy"})};
  result.model.initialize(encoder.seed);
  EvalFn eval;
  if (!held_out.empty())
    eval = [&](const Model& m) -> std::vector<std::optional<double>> {
      return {classification_accuracy(m, held_out, config.threads)};
    };
  LossFn<ClassifierExample> loss = [](const Model& m, const ClassifierExample& ex, VectorXf* g) {
    return classification_loss(m, ex, g);
  };
  run_loop(result.model, train, config, loss, eval, result.log);
  return result;
}

TrainResult train_reward(const TwoStageSchedule& schedule, const Model& init, const std::vector<PreferencePair>& held_out) {
  TrainResult result{init.heads().has(Head::reward) ? init : init.with_heads(init.heads().with(Head::reward), init.config().seed + 1),
                     MetricLog({"heldout_accuracy"})};
  LossFn<PreferencePair> loss = [](const Model& m, const PreferencePair& p, VectorXf* g) { return reward_pair_loss(m, p, g); };
  int offset = 0;
  for (const TrainStage* stage : {&schedule.pretrain, &schedule.finetune}) {
    if (stage->data.empty()) continue;
    EvalFn eval;
    if (!held_out.empty())
      eval = [&](const Model& m) -> std::vector<std::optional<double>> {
        return {preference_accuracy(m, held_out, stage->config.threads)};
      };
    run_loop(result.model, stage->data, stage->config, loss, eval, result.log, offset);
    offset += stage->config.max_steps;
  }
  require(offset > 0, ErrorCategory::invalid_request, "train_reward: both stages are empty");
  return result;
}

TrainResult train_margin_predictor(const Model& representation, const std::vector<PreferencePair>& labeled,
                                   const TrainConfig& config, const std::vector<PreferencePair>& held_out) {
  require(labeled.size() >= 10, ErrorCategory::invalid_request,
          "train_margin_predictor: need at least 10 labeled pairs, got " + std::to_string(labeled.size()));
  struct Target {
    const PreferencePair* pair;
    double value;
  };
  std::vector<Target> targets;
  targets.reserve(labeled.size());
  for (const auto& p : labeled) {
    require(p.margin_label.has_value(), ErrorCategory::validation, "pair '" + p.id + "' has no margin_label");
    targets.push_back({&p, normalize_margin(*p.margin_label)});
  }
  std::vector<double> held_labels;
  for (const auto& p : held_out) {
    require(p.margin_label.has_value(), ErrorCategory::validation, "held-out pair '" + p.id + "' has no margin_label");
    held_labels.push_back(normalize_margin(*p.margin_label));
  }

  TrainResult result{representation.with_heads(representation.heads().with(Head::margin), representation.config().seed + 2),
                     MetricLog({"heldout_spearman", "heldout_pearson"})};
  EvalFn eval;
  if (!held_out.empty())
    eval = [&](const Model& m) -> std::vector<std::optional<double>> {
      std::vector<double> preds(held_out.size());
      parallel_for(held_out.size(), config.threads, [&](std::size_t i) { preds[i] = predict_margin(m, held_out[i]); });
      return {spearman(preds, held_labels), pearson(preds, held_labels)};
    };
  LossFn<Target> loss = [](const Model& m, const Target& t, VectorXf* g) { return margin_loss(m, *t.pair, t.value, g); };
  run_loop(result.model, targets, config, loss, eval, result.log);
  return result;
}

namespace {

std::vector<ReferenceLogprobs> reference_cache(const Model& reference, const std::vector<PreferencePair>& pairs,
                                               int threads) {
  std::vector<ReferenceLogprobs> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) { out[i] = pair_logprobs(reference, pairs[i]); });
  return out;
}

}  // namespace

std::vector<double> dpo_implicit_gaps(const Model& policy, const Model& reference,
                                      const std::vector<PreferencePair>& pairs, double beta, int threads) {
  const auto ref = reference_cache(reference, pairs, threads);
  std::vector<double> gaps(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto lp = pair_logprobs(policy, pairs[i]);
    gaps[i] = beta * (lp.chosen - ref[i].chosen) - beta * (lp.rejected - ref[i].rejected);
  });
  return gaps;
}

TrainResult train_dpo(const Model& policy_init, const Model& reference, const std::vector<PreferencePair>& pairs,
                      const DPOConfig& dpo, const TrainConfig& config, const MarginMap& margins) {
  dpo.validate();
  require(policy_init.heads().has(Head::lm) && reference.heads().has(Head::lm), ErrorCategory::validation,
          "train_dpo: policy and reference need lm heads");
  using Source = DPOConfig::MarginSource;
  require((dpo.margin_source == Source::per_pair) == !margins.empty(), ErrorCategory::invalid_request,
          "train_dpo: per-pair margins must be supplied iff margin_source is per_pair");

  std::map<std::string, double> by_id;
  for (const auto& [id, m] : margins) by_id[id] = m;
  struct Item {
    const PreferencePair* pair;
    ReferenceLogprobs reference;
    double margin;
  };
  const auto ref = reference_cache(reference, pairs, config.threads);
  std::vector<Item> items;
  items.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double m = 0.0;
    if (dpo.margin_source == Source::fixed) {
      m = dpo.fixed_margin;
    } else if (dpo.margin_source == Source::per_pair) {
      auto it = by_id.find(pairs[i].id);
      if (it == by_id.end()) fail(ErrorCategory::invalid_request, "train_dpo: no margin for pair '" + pairs[i].id + "'");
      m = it->second;
      require(m >= 0.0 && std::isfinite(m), ErrorCategory::validation,
              "train_dpo: margin for pair '" + pairs[i].id + "' must be finite and >= 0");
    }
    items.push_back({&pairs[i], ref[i], m});
  }

  TrainResult result{policy_init, MetricLog({"mean_implicit_gap"})};
  const double beta = dpo.beta;
  EvalFn eval = [&](const Model& m) -> std::vector<std::optional<double>> {
    std::vector<double> gaps(items.size());
    parallel_for(items.size(), config.threads, [&](std::size_t i) {
      const auto lp = pair_logprobs(m, *items[i].pair);
      gaps[i] = beta * (lp.chosen - items[i].reference.chosen) - beta * (lp.rejected - items[i].reference.rejected);
    });
    return {std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size())};
  };
  LossFn<Item> loss = [beta](const Model& m, const Item& it, VectorXf* g) {
    return dpo_pair_loss(m, *it.pair, it.reference, beta, it.margin, g);
  };
  run_loop(result.model, items, config, loss, eval, result.log);
  return result;
}

TrainResult train_sft(const Model& init, const std::vector<PreferencePair>& pairs, const TrainConfig& config) {
  TrainResult result{init.heads().has(Head::lm) ? init : init.with_heads(init.heads().with(Head::lm), init.config().seed + 3),
                     MetricLog(std::vector<std::string>{})};
  LossFn<PreferencePair> loss = [](const Model& m, const PreferencePair& p, VectorXf* g) { return sft_loss(m, p, g); };
  run_loop(result.model, pairs, config, loss, EvalFn{}, result.log);
  return result;
}

}  // namespace lrhp
