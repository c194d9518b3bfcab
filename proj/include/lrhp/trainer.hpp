#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lrhp/corpus.hpp"
#include "lrhp/loss_graphs.hpp"
#include "lrhp/objectives.hpp"
#include "lrhp/optim.hpp"
#include "lrhp/pmp.hpp"
#include "lrhp/transformer.hpp"

namespace lrhp {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int max_steps = 500;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  /// Evaluate every N steps (and always after the final step); 0 evaluates
  /// only at the end.
  int eval_every = 100;
  /// Worker threads for per-example gradients. Results do not depend on it.
  int threads = 1;

  void validate(std::size_t dataset_size) const;
};

/// Per-step training loss plus evaluation metrics on the steps where they
/// were computed.
class MetricLog {
 public:
  struct Row {
    int step = 0;
    double loss = 0.0;
    std::vector<std::optional<double>> metrics;

    bool operator==(const Row&) const = default;
  };

  MetricLog() = default;
  explicit MetricLog(std::vector<std::string> metric_names) : names_(std::move(metric_names)) {}

  void record(int step, double loss) { rows_.push_back({step, loss, std::vector<std::optional<double>>(names_.size())}); }
  void record(int step, double loss, std::vector<std::optional<double>> metrics);

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Row>& rows() const { return rows_; }
  /// Most recent value of a metric, if it was ever recorded.
  std::optional<double> last(const std::string& name) const;
  /// CSV "step,loss,<metrics...>"; metrics that were not evaluated are empty.
  std::string to_csv() const;

  bool operator==(const MetricLog&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Row> rows_;
};

struct TrainResult {
  Model model;
  MetricLog log;
};

/// Encoder plus classifier head (lm head in ntp mode) trained on balanced
/// classification examples. Logs held-out accuracy when `held_out` is given.
TrainResult train_representation(const TrainConfig& config, const std::vector<ClassifierExample>& train,
                                 const EncoderConfig& encoder, const std::vector<ClassifierExample>& held_out = {});

double classification_accuracy(const Model& model, const std::vector<ClassifierExample>& examples, int threads = 1);

struct TrainStage {
  std::vector<PreferencePair> data;
  TrainConfig config;
};

/// Pretrain on selected data, then fine-tune on preference-specific data.
/// Both stages use the same learning rate unless a stage overrides it; an
/// empty pretrain stage reduces to single-stage training.
struct TwoStageSchedule {
  TrainStage pretrain;
  TrainStage finetune;
};

/// Reward model (encoder + scalar head) trained with the Bradley-Terry loss
/// over the schedule's stages in order. A reward head is added to `init` if
/// it has none.
TrainResult train_reward(const TwoStageSchedule& schedule, const Model& init,
                         const std::vector<PreferencePair>& held_out = {});

/// Fine-tunes a representation model with a scalar regression head on
/// normalized margin labels. Logs held-out Spearman and Pearson.
TrainResult train_margin_predictor(const Model& representation, const std::vector<PreferencePair>& labeled,
                                   const TrainConfig& config, const std::vector<PreferencePair>& held_out = {});

/// Per-pair margins keyed by pair id; required iff margin_source is per_pair.
using MarginMap = MarginTable;

/// Margin-constrained DPO against a frozen reference whose log-probabilities
/// are computed once up front. Logs the mean implicit gap each evaluation.
TrainResult train_dpo(const Model& policy_init, const Model& reference, const std::vector<PreferencePair>& pairs,
                      const DPOConfig& dpo, const TrainConfig& config, const MarginMap& margins = {});

/// beta * (lr_w - lr_l) for every pair.
std::vector<double> dpo_implicit_gaps(const Model& policy, const Model& reference,
                                      const std::vector<PreferencePair>& pairs, double beta, int threads = 1);

/// Teacher-forced language modeling on chosen responses (adds an lm head if
/// missing). Produces policies and references for DPO and sampling.
TrainResult train_sft(const Model& init, const std::vector<PreferencePair>& pairs, const TrainConfig& config);

}  // namespace lrhp
