#include "lrhp/loss_graphs.hpp"

#include <cmath>

namespace lrhp {

namespace {

template <typename Scalar>
std::vector<TokenId> example_tokens(const Transformer<Scalar>& model, const ClassifierExample& ex) {
  return tokenize_pair(ex.prompt, ex.ordered_responses[0], ex.ordered_responses[1],
                       model.config().representation_mode, model.config().max_seq_len);
}

// Margins describe (chosen, rejected), so the pair is encoded in that order.
template <typename Scalar>
std::vector<TokenId> margin_tokens(const Transformer<Scalar>& model, const PreferencePair& p) {
  return tokenize_pair(p.prompt, p.chosen(), p.rejected(), model.config().representation_mode,
                       model.config().max_seq_len);
}

/// log-softmax of a logit row at `target`, accumulated in double.
template <typename Scalar>
double log_softmax_at(const RowVector<Scalar>& logits, TokenId target, RowVector<double>* probs) {
  const RowVector<double> z = logits.template cast<double>();
  const double m = z.maxCoeff();
  RowVector<double> e = (z.array() - m).exp();
  const double s = e.sum();
  if (probs) *probs = e / s;
  return z(target) - m - std::log(s);
}

}  // namespace

template <typename Scalar>
double classification_loss(const Transformer<Scalar>& model, const ClassifierExample& ex, Vector<Scalar>* grad) {
  const auto tokens = example_tokens(model, ex);
  const auto tr = model.forward(tokens);
  const Eigen::Index last = tr.length() - 1;
  if (model.config().representation_mode == RepresentationMode::ntp) {
    const RowVector<Scalar> logits = model.lm_logits(tr, last);
    const TokenId answer = answer_token(ex.label);
    const double loss = ntp_answer_loss(logits, answer);
    if (grad) {
      Matrix<Scalar> d_out = Matrix<Scalar>::Zero(tr.length(), model.config().d_model);
      model.lm_head_backward(tr, last, ntp_answer_grad(logits, answer), d_out, *grad);
      model.backward(tr, d_out, *grad);
    }
    return loss;
  }
  const double logit = static_cast<double>(model.scalar_head(tr, Head::classifier, last));
  const double loss = bce_classification_loss(logit, ex.label);
  if (grad) {
    Matrix<Scalar> d_out = Matrix<Scalar>::Zero(tr.length(), model.config().d_model);
    model.scalar_head_backward(tr, Head::classifier, last, static_cast<Scalar>(bce_classification_grad(logit, ex.label)),
                               d_out, *grad);
    model.backward(tr, d_out, *grad);
  }
  return loss;
}

template <typename Scalar>
int classify(const Transformer<Scalar>& model, const ClassifierExample& ex) {
  const auto tokens = example_tokens(model, ex);
  const auto tr = model.forward(tokens);
  const Eigen::Index last = tr.length() - 1;
  if (model.config().representation_mode == RepresentationMode::ntp) {
    const RowVector<Scalar> logits = model.lm_logits(tr, last);
    return logits(answer_token(1)) > logits(answer_token(0)) ? 1 : 0;
  }
  return model.scalar_head(tr, Head::classifier, last) > Scalar(0) ? 1 : 0;
}

template <typename Scalar>
double reward_score(const Transformer<Scalar>& model, std::string_view prompt, std::string_view response) {
  const auto tokens = tokenize_scored(prompt, response, model.config().max_seq_len);
  const auto tr = model.forward(tokens);
  return static_cast<double>(model.scalar_head(tr, Head::reward, tr.length() - 1));
}

template <typename Scalar>
double reward_pair_loss(const Transformer<Scalar>& model, const PreferencePair& pair, Vector<Scalar>* grad) {
  const int max_len = model.config().max_seq_len;
  const auto tok_w = tokenize_scored(pair.prompt, pair.chosen(), max_len);
  const auto tok_l = tokenize_scored(pair.prompt, pair.rejected(), max_len);
  const auto tr_w = model.forward(tok_w);
  const auto tr_l = model.forward(tok_l);
  const double r_w = static_cast<double>(model.scalar_head(tr_w, Head::reward, tr_w.length() - 1));
  const double r_l = static_cast<double>(model.scalar_head(tr_l, Head::reward, tr_l.length() - 1));
  const PairLoss l = bt_reward_loss_grad(r_w, r_l);
  if (grad) {
    const Eigen::Index d = model.config().d_model;
    Matrix<Scalar> d_w = Matrix<Scalar>::Zero(tr_w.length(), d);
    model.scalar_head_backward(tr_w, Head::reward, tr_w.length() - 1, static_cast<Scalar>(l.d_first), d_w, *grad);
    model.backward(tr_w, d_w, *grad);
    Matrix<Scalar> d_l = Matrix<Scalar>::Zero(tr_l.length(), d);
    model.scalar_head_backward(tr_l, Head::reward, tr_l.length() - 1, static_cast<Scalar>(l.d_second), d_l, *grad);
    model.backward(tr_l, d_l, *grad);
  }
  return l.value;
}

template <typename Scalar>
double margin_output(const Transformer<Scalar>& model, const PreferencePair& pair) {
  const auto tokens = margin_tokens(model, pair);
  const auto tr = model.forward(tokens);
  return static_cast<double>(model.scalar_head(tr, Head::margin, tr.length() - 1));
}

template <typename Scalar>
double margin_loss(const Transformer<Scalar>& model, const PreferencePair& pair, double target, Vector<Scalar>* grad) {
  const auto tokens = margin_tokens(model, pair);
  const auto tr = model.forward(tokens);
  const Eigen::Index last = tr.length() - 1;
  const double pred = static_cast<double>(model.scalar_head(tr, Head::margin, last));
  const double loss = mse_margin_loss(pred, target);
  if (grad) {
    Matrix<Scalar> d_out = Matrix<Scalar>::Zero(tr.length(), model.config().d_model);
    model.scalar_head_backward(tr, Head::margin, last, static_cast<Scalar>(mse_margin_grad(pred, target)), d_out, *grad);
    model.backward(tr, d_out, *grad);
  }
  return loss;
}

template <typename Scalar>
double token_logprob(const Transformer<Scalar>& model, std::span<const TokenId> context,
                     std::span<const TokenId> response, Vector<Scalar>* grad, double upstream) {
  require(!context.empty(), ErrorCategory::invalid_request, "token_logprob: empty context");
  require(!response.empty(), ErrorCategory::invalid_request, "token_logprob: empty response");
  std::vector<TokenId> full(context.begin(), context.end());
  full.insert(full.end(), response.begin(), response.end());
  const auto tr = model.forward(full);
  const auto ctx = static_cast<Eigen::Index>(context.size());
  Matrix<Scalar> d_out;
  if (grad) d_out = Matrix<Scalar>::Zero(tr.length(), model.config().d_model);
  double total = 0.0;
  RowVector<double> probs;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(response.size()); ++i) {
    const Eigen::Index pos = ctx - 1 + i;
    const TokenId target = response[static_cast<std::size_t>(i)];
    const RowVector<Scalar> logits = model.lm_logits(tr, pos);
    total += log_softmax_at(logits, target, grad ? &probs : nullptr);
    if (grad) {
      RowVector<double> d = -probs;
      d(target) += 1.0;
      model.lm_head_backward(tr, pos, (upstream * d).template cast<Scalar>(), d_out, *grad);
    }
  }
  if (grad) model.backward(tr, d_out, *grad);
  return total;
}

std::vector<TokenId> response_tokens(std::string_view response) { return encode_bytes(response); }

template <typename Scalar>
ReferenceLogprobs pair_logprobs(const Transformer<Scalar>& policy, const PreferencePair& pair) {
  const auto ctx = lm_context(pair.prompt);
  return {token_logprob(policy, ctx, response_tokens(pair.chosen())),
          token_logprob(policy, ctx, response_tokens(pair.rejected()))};
}

template <typename Scalar>
double dpo_pair_loss(const Transformer<Scalar>& policy, const PreferencePair& pair, const ReferenceLogprobs& reference,
                     double beta, double margin, Vector<Scalar>* grad) {
  const auto ctx = lm_context(pair.prompt);
  const auto yw = response_tokens(pair.chosen());
  const auto yl = response_tokens(pair.rejected());
  const double lp_w = token_logprob(policy, ctx, yw);
  const double lp_l = token_logprob(policy, ctx, yl);
  const PairLoss l = constrained_dpo_loss_grad(lp_w - reference.chosen, lp_l - reference.rejected, beta, margin);
  if (grad) {
    token_logprob(policy, ctx, yw, grad, l.d_first);
    token_logprob(policy, ctx, yl, grad, l.d_second);
  }
  return l.value;
}

template <typename Scalar>
double sft_loss(const Transformer<Scalar>& model, const PreferencePair& pair, Vector<Scalar>* grad) {
  const auto ctx = lm_context(pair.prompt);
  auto target = response_tokens(pair.chosen());
  target.push_back(tok::kEos);
  return -token_logprob(model, ctx, target, grad, -1.0);
}

#define LRHP_INSTANTIATE(S)                                                                                         \
  template double classification_loss<S>(const Transformer<S>&, const ClassifierExample&, Vector<S>*);             \
  template int classify<S>(const Transformer<S>&, const ClassifierExample&);                                       \
  template double reward_score<S>(const Transformer<S>&, std::string_view, std::string_view);                      \
  template double reward_pair_loss<S>(const Transformer<S>&, const PreferencePair&, Vector<S>*);                   \
  template double margin_output<S>(const Transformer<S>&, const PreferencePair&);                                  \
  template double margin_loss<S>(const Transformer<S>&, const PreferencePair&, double, Vector<S>*);                 \
  template double token_logprob<S>(const Transformer<S>&, std::span<const TokenId>, std::span<const TokenId>,      \
                                   Vector<S>*, double);                                                            \
  template ReferenceLogprobs pair_logprobs<S>(const Transformer<S>&, const PreferencePair&);                       \
  template double dpo_pair_loss<S>(const Transformer<S>&, const PreferencePair&, const ReferenceLogprobs&, double, \
                                   double, Vector<S>*);                                                            \
  template double sft_loss<S>(const Transformer<S>&, const PreferencePair&, Vector<S>*);

LRHP_INSTANTIATE(float)
LRHP_INSTANTIATE(double)

#undef LRHP_INSTANTIATE

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::classifier: return "classifier";
    case Objective::reward: return "reward";
    case Objective::margin: return "margin";
    case Objective::dpo: return "dpo";
  }
  return "unknown";
}

Objective parse_objective(std::string_view s) {
  for (Objective o : {Objective::classifier, Objective::reward, Objective::margin, Objective::dpo})
    if (s == objective_name(o)) return o;
  fail(ErrorCategory::invalid_request, "unknown objective '" + std::string(s) + "'");
}

HeadSet objective_heads(Objective o) {
  switch (o) {
    case Objective::classifier: return {Head::classifier};
    case Objective::reward: return {Head::reward};
    case Objective::margin: return {Head::margin};
    case Objective::dpo: return {Head::lm};
  }
  return {};
}

LossGraph objective_graph(const Transformer<double>& model, Objective objective, const ObjectiveProbe& probe) {
  const HeadSet need = objective_heads(objective);
  require(model.heads().has(static_cast<Head>(need.bits())), ErrorCategory::invalid_request,
          std::string("objective_graph: model lacks the ") + objective_name(objective) + " head");
  ReferenceLogprobs reference;
  if (objective == Objective::dpo) {
    reference = pair_logprobs(model, probe.pair);
    reference.chosen += probe.reference_offset;
  }
  const ClassifierExample example{probe.pair.id, probe.pair.prompt,
                                  {probe.pair.response_a, probe.pair.response_b},
                                  probe.pair.preferred == Side::A ? 0 : 1};
  return [m = Transformer<double>(model), objective, probe, reference, example](const VectorXd& params,
                                                                                VectorXd* grad) mutable {
    m.params() = params;
    switch (objective) {
      case Objective::classifier: return classification_loss(m, example, grad);
      case Objective::reward: return reward_pair_loss(m, probe.pair, grad);
      case Objective::margin: return margin_loss(m, probe.pair, probe.margin_target, grad);
      case Objective::dpo: break;
    }
    return dpo_pair_loss(m, probe.pair, reference, probe.beta, probe.dpo_margin, grad);
  };
}

}  // namespace lrhp
