#include "lrhp/align_eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "lrhp/loss_graphs.hpp"
#include "lrhp/util.hpp"

namespace lrhp {

double seq_logprob(const Model& lm, std::string_view prompt, std::string_view response) {
  require(lm.heads().has(Head::lm), ErrorCategory::validation, "seq_logprob: checkpoint has no lm head");
  require(!response.empty(), ErrorCategory::invalid_request, "seq_logprob: empty response");
  const auto ctx = lm_context(prompt);
  const auto resp = response_tokens(response);
  return token_logprob(lm, ctx, resp);
}

void SamplerConfig::validate() const {
  require(n >= 1, ErrorCategory::invalid_request, "sampler: n must be >= 1");
  require(top_p > 0.0 && top_p <= 1.0, ErrorCategory::invalid_request, "sampler: top_p must be in (0, 1]");
  require(temperature > 0.0, ErrorCategory::invalid_request, "sampler: temperature must be positive");
  require(max_new_tokens >= 1, ErrorCategory::invalid_request, "sampler: max_new_tokens must be >= 1");
}

VectorXd top_p_filter(const VectorXd& probs, double top_p) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(probs.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return probs[a] > probs[b]; });
  VectorXd kept = VectorXd::Zero(probs.size());
  double mass = 0.0;
  for (Eigen::Index idx : order) {
    kept[idx] = probs[idx];
    mass += probs[idx];
    if (mass >= top_p) break;
  }
  return kept / mass;
}

TokenId sample_token(const VectorXd& logits, double top_p, double temperature, std::mt19937_64& rng) {
  VectorXd z = logits / temperature;
  VectorXd p = (z.array() - z.maxCoeff()).exp();
  p /= p.sum();
  const VectorXd kept = top_p_filter(p, top_p);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  Eigen::Index last_nonzero = 0;
  for (Eigen::Index i = 0; i < kept.size(); ++i) {
    if (kept[i] == 0.0) continue;
    last_nonzero = i;
    acc += kept[i];
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_nonzero);
}

std::vector<std::string> sample_top_p(const Model& lm, std::string_view prompt, const SamplerConfig& config) {
  config.validate();
  require(lm.heads().has(Head::lm), ErrorCategory::validation, "sample_top_p: checkpoint has no lm head");
  const auto ctx = lm_context(prompt);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(config.n));
  for (int c = 0; c < config.n; ++c) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(c)};
    std::mt19937_64 rng(seq);
    std::vector<TokenId> tokens = ctx;
    std::vector<TokenId> generated;
    for (int step = 0; step < config.max_new_tokens; ++step) {
      if (static_cast<int>(tokens.size()) >= lm.config().max_seq_len) break;
      const auto tr = lm.forward(tokens);
      const VectorXd logits = lm.lm_logits(tr, tr.length() - 1).transpose().cast<double>();
      const TokenId next = sample_token(logits, config.top_p, config.temperature, rng);
      if (next == tok::kEos) break;
      tokens.push_back(next);
      generated.push_back(next);
    }
    out.push_back(decode(generated));
  }
  return out;
}

BestOfN best_of_scores(const std::vector<double>& scores) {
  require(!scores.empty(), ErrorCategory::invalid_request, "best_of_n: no candidates");
  BestOfN best{0, scores[0]};
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > best.score) best = {i, scores[i]};
  return best;
}

BestOfN best_of_n(const Model& reward_model, std::string_view prompt, const std::vector<std::string>& candidates) {
  require(!candidates.empty(), ErrorCategory::invalid_request, "best_of_n: no candidates");
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) scores.push_back(reward_score(reward_model, prompt, c));
  return best_of_scores(scores);
}

double preference_accuracy(const std::function<double(const std::string&, const std::string&)>& score,
                           const std::vector<PreferencePair>& pairs) {
  require(!pairs.empty(), ErrorCategory::invalid_request, "preference_accuracy: empty test set");
  std::size_t correct = 0;
  for (const auto& p : pairs)
    if (score(p.prompt, p.chosen()) > score(p.prompt, p.rejected())) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

double preference_accuracy(const Model& reward_model, const std::vector<PreferencePair>& pairs, int threads) {
  require(!pairs.empty(), ErrorCategory::invalid_request, "preference_accuracy: empty test set");
  std::vector<char> hit(pairs.size(), 0);
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto& p = pairs[i];
    hit[i] = reward_score(reward_model, p.prompt, p.chosen()) > reward_score(reward_model, p.prompt, p.rejected());
  });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(pairs.size());
}

// Judging

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Pa: return "Pa";
    case Verdict::Pb: return "Pb";
    case Verdict::Tie: return "Tie";
  }
  return "?";
}

Verdict parse_verdict(std::string_view s) {
  if (s == "Pa") return Verdict::Pa;
  if (s == "Pb") return Verdict::Pb;
  if (s == "Tie") return Verdict::Tie;
  fail(ErrorCategory::parse, "unknown verdict '" + std::string(s) + "'");
}

std::vector<Judgment> consistency_filter(const std::vector<Judgment>& pass1, const std::vector<Judgment>& pass2,
                                         InconsistentPolicy policy) {
  std::map<std::string, Verdict> second;
  for (const auto& j : pass2)
    if (!second.emplace(j.item_id, j.verdict).second)
      fail(ErrorCategory::validation, "consistency_filter: duplicate item '" + j.item_id + "' in pass 2");
  require(pass1.size() == second.size(), ErrorCategory::validation, "consistency_filter: passes cover different items");
  std::vector<Judgment> out;
  out.reserve(pass1.size());
  for (const auto& j : pass1) {
    auto it = second.find(j.item_id);
    if (it == second.end()) fail(ErrorCategory::validation, "consistency_filter: item '" + j.item_id + "' missing from pass 2");
    if (mirror(it->second) == j.verdict) {
      out.push_back(j);
    } else if (policy == InconsistentPolicy::tie) {
      out.push_back({j.item_id, Verdict::Tie});
    }
  }
  return out;
}

WinRate win_rate(const std::vector<Judgment>& judgments) {
  require(!judgments.empty(), ErrorCategory::invalid_request, "win_rate: no judgments");
  WinRate w;
  w.total = static_cast<int>(judgments.size());
  for (const auto& j : judgments) {
    if (j.verdict == Verdict::Pa) ++w.count_a;
    else if (j.verdict == Verdict::Pb) ++w.count_b;
    else ++w.count_tie;
  }
  const int decided = w.total - w.count_tie;
  if (decided > 0) {
    w.s_a = static_cast<double>(w.count_a) / decided;
    w.s_b = static_cast<double>(w.count_b) / decided;
  }
  return w;
}

Verdict oracle_judge(std::string_view response_a, std::string_view response_b,
                     const std::function<double(std::string_view)>& quality, double epsilon) {
  const double qa = quality(response_a);
  const double qb = quality(response_b);
  if (std::abs(qa - qb) <= epsilon) return Verdict::Tie;
  return qa > qb ? Verdict::Pa : Verdict::Pb;
}

std::string judgments_to_csv(const std::vector<PassJudgment>& rows) {
  std::ostringstream out;
  out << "item_id,verdict,pass\n";
  for (const auto& r : rows) out << r.judgment.item_id << ',' << verdict_name(r.judgment.verdict) << ',' << r.pass << '\n';
  return out.str();
}

std::vector<PassJudgment> judgments_from_csv(std::string_view text) {
  std::vector<PassJudgment> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (++line_no == 1 || line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 3) fail(ErrorCategory::parse, "judgment CSV line " + std::to_string(line_no) + ": expected 3 columns");
    const int pass = static_cast<int>(parse_double(cells[2]));
    if (pass != 1 && pass != 2) fail(ErrorCategory::parse, "judgment CSV line " + std::to_string(line_no) + ": pass must be 1 or 2");
    out.push_back({{cells[0], parse_verdict(cells[1])}, pass});
  }
  return out;
}

std::string win_rate_to_csv(const WinRate& w) {
  std::ostringstream out;
  out << "T,count_Pa,count_Pb,count_Tie,S_a,S_b\n";
  out << w.total << ',' << w.count_a << ',' << w.count_b << ',' << w.count_tie << ','
      << (w.s_a ? format_double(*w.s_a) : "undefined") << ',' << (w.s_b ? format_double(*w.s_b) : "undefined") << '\n';
  return out.str();
}

}  // namespace lrhp
