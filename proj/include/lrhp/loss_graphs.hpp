#pragma once

#include <span>
#include <vector>

#include "lrhp/corpus.hpp"
#include "lrhp/objectives.hpp"
#include "lrhp/transformer.hpp"

namespace lrhp {

/// Per-example objectives over a Transformer. Each returns the loss and, when
/// `grad` is non-null, adds its parameter gradient into `grad`.

/// Preference classification on one ordered example: BCE on the classifier
/// head at the terminal token, or answer-token cross-entropy in ntp mode.
template <typename Scalar>
double classification_loss(const Transformer<Scalar>& model, const ClassifierExample& example, Vector<Scalar>* grad);

/// Predicted label (0 or 1) for a classification example.
template <typename Scalar>
int classify(const Transformer<Scalar>& model, const ClassifierExample& example);

/// Scalar reward of one response, read at the EOS of BOS prompt SEP response EOS.
template <typename Scalar>
double reward_score(const Transformer<Scalar>& model, std::string_view prompt, std::string_view response);

/// Bradley-Terry loss on the reward gap between chosen and rejected.
template <typename Scalar>
double reward_pair_loss(const Transformer<Scalar>& model, const PreferencePair& pair, Vector<Scalar>* grad);

/// Raw margin-head output at the terminal token of the pair template, with
/// the chosen response first.
template <typename Scalar>
double margin_output(const Transformer<Scalar>& model, const PreferencePair& pair);

/// Squared error between the margin head and `target`.
template <typename Scalar>
double margin_loss(const Transformer<Scalar>& model, const PreferencePair& pair, double target, Vector<Scalar>* grad);

/// Sum of log-probabilities of `response` tokens given `context` under teacher
/// forcing. `upstream` scales the gradient written into `grad`.
template <typename Scalar>
double token_logprob(const Transformer<Scalar>& model, std::span<const TokenId> context,
                     std::span<const TokenId> response, Vector<Scalar>* grad = nullptr, double upstream = 1.0);

struct ReferenceLogprobs {
  double chosen = 0.0;
  double rejected = 0.0;
};

/// Tokens of a response as scored by the DPO objective (no EOS).
std::vector<TokenId> response_tokens(std::string_view response);

/// Policy and reference log-probabilities of chosen and rejected responses.
template <typename Scalar>
ReferenceLogprobs pair_logprobs(const Transformer<Scalar>& policy, const PreferencePair& pair);

/// Constrained DPO loss for one pair against cached reference log-probs.
template <typename Scalar>
double dpo_pair_loss(const Transformer<Scalar>& policy, const PreferencePair& pair, const ReferenceLogprobs& reference,
                     double beta, double margin, Vector<Scalar>* grad);

/// Negative log-likelihood of the chosen response followed by EOS.
template <typename Scalar>
double sft_loss(const Transformer<Scalar>& model, const PreferencePair& pair, Vector<Scalar>* grad);

// Gradient-check graphs

/// The four trainable configurations.
enum class Objective { classifier, reward, margin, dpo };

const char* objective_name(Objective o);
Objective parse_objective(std::string_view s);
/// Heads a model needs for the objective (lm for dpo).
HeadSet objective_heads(Objective o);

/// Fixed inputs of a gradient-check graph.
struct ObjectiveProbe {
  PreferencePair pair;
  double margin_target = 0.7;
  double beta = 0.1;
  double dpo_margin = 0.2;
  /// Added to the reference log-prob of the chosen response so the DPO loss
  /// is not evaluated at the policy == reference point.
  double reference_offset = 0.3;
};

/// Loss of `model` on the probe as a function of its flat parameters. The
/// DPO reference is the model itself at construction time.
LossGraph objective_graph(const Transformer<double>& model, Objective objective, const ObjectiveProbe& probe);

}  // namespace lrhp
