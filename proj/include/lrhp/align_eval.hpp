#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lrhp/corpus.hpp"
#include "lrhp/transformer.hpp"

namespace lrhp {

/// Sum of response-token log-probabilities given BOS prompt SEP. EOS is not
/// scored, so the chain rule holds for any split of the response.
double seq_logprob(const Model& lm, std::string_view prompt, std::string_view response);

struct SamplerConfig {
  int n = 8;
  double top_p = 0.95;
  double temperature = 0.75;
  std::uint64_t seed = 0;
  int max_new_tokens = 32;

  void validate() const;
};

/// Nucleus filter over a probability vector: keeps the smallest
/// highest-probability prefix whose mass reaches `top_p` (the token crossing
/// the boundary is kept) and renormalizes. Ties in probability keep the lower
/// token id first.
VectorXd top_p_filter(const VectorXd& probs, double top_p);

/// One draw from softmax(logits / temperature) after the nucleus filter.
TokenId sample_token(const VectorXd& logits, double top_p, double temperature, std::mt19937_64& rng);

/// `config.n` candidates. Candidate i uses its own generator seeded from
/// (seed, i), so candidates are reproducible independently of each other.
std::vector<std::string> sample_top_p(const Model& lm, std::string_view prompt, const SamplerConfig& config);

struct BestOfN {
  std::size_t index = 0;
  double score = 0.0;
};

/// Highest reward score; ties go to the lowest index.
BestOfN best_of_n(const Model& reward_model, std::string_view prompt, const std::vector<std::string>& candidates);
BestOfN best_of_scores(const std::vector<double>& scores);

/// Fraction of pairs scored strictly higher on the chosen response.
double preference_accuracy(const Model& reward_model, const std::vector<PreferencePair>& pairs, int threads = 1);
double preference_accuracy(const std::function<double(const std::string&, const std::string&)>& score,
                           const std::vector<PreferencePair>& pairs);

// Judging and win rate

enum class Verdict { Pa, Pb, Tie };

const char* verdict_name(Verdict v);
Verdict parse_verdict(std::string_view s);
/// Verdict as seen with the response order swapped.
inline Verdict mirror(Verdict v) { return v == Verdict::Pa ? Verdict::Pb : v == Verdict::Pb ? Verdict::Pa : Verdict::Tie; }

struct Judgment {
  std::string item_id;
  Verdict verdict = Verdict::Tie;

  bool operator==(const Judgment&) const = default;
};

enum class InconsistentPolicy { tie, drop };

/// Combines a pass judged in (a, b) order with a pass judged in (b, a) order.
/// Pass-2 verdicts are mirrored; agreeing items keep their verdict and
/// disagreeing items become Tie (or are dropped under InconsistentPolicy::drop).
std::vector<Judgment> consistency_filter(const std::vector<Judgment>& pass1, const std::vector<Judgment>& pass2,
                                         InconsistentPolicy policy = InconsistentPolicy::tie);

struct WinRate {
  int total = 0;
  int count_a = 0;
  int count_b = 0;
  int count_tie = 0;
  /// Count(P)/(T - Count(Tie)); empty when every item is a tie.
  std::optional<double> s_a;
  std::optional<double> s_b;
};

WinRate win_rate(const std::vector<Judgment>& judgments);

/// Pa or Pb by higher quality; Tie when the qualities differ by <= epsilon.
Verdict oracle_judge(std::string_view response_a, std::string_view response_b,
                     const std::function<double(std::string_view)>& quality, double epsilon = 0.0);

struct PassJudgment {
  Judgment judgment;
  int pass = 1;
};

std::string judgments_to_csv(const std::vector<PassJudgment>& rows);
std::vector<PassJudgment> judgments_from_csv(std::string_view text);
std::string win_rate_to_csv(const WinRate& w);

}  // namespace lrhp
