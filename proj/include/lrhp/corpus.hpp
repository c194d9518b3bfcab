#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lrhp {

enum class Side { A, B };

struct PairTags {
  std::string source;
  std::string task;
  std::string pref_type;

  bool operator==(const PairTags&) const = default;
};

/// A prompt with two responses, one of which is preferred.
struct PreferencePair {
  std::string id;
  std::string prompt;
  std::string response_a;
  std::string response_b;
  Side preferred = Side::A;
  PairTags tags;
  std::optional<int> margin_label;  // 1..4 when present

  const std::string& chosen() const { return preferred == Side::A ? response_a : response_b; }
  const std::string& rejected() const { return preferred == Side::A ? response_b : response_a; }

  bool operator==(const PreferencePair&) const = default;
};

/// One preference-classification sample. Label 0 means the first ordered
/// response is the preferred one.
struct ClassifierExample {
  std::string pair_id;
  std::string prompt;
  std::array<std::string, 2> ordered_responses;
  int label = 0;

  ClassifierExample flipped() const {
    return {pair_id, prompt, {ordered_responses[1], ordered_responses[0]}, 1 - label};
  }
  bool operator==(const ClassifierExample&) const = default;
};

enum class MarginRule { none, gap };

/// Parameters of the planted synthetic corpus.
///
/// Every preference type owns a lexicon of marker bytes. Within a pair of type
/// t the preferred response carries `gap` more type-t markers than the other
/// one (gap uniform in 1..4), and when `cross_conflict` is set the
/// dispreferred response also carries markers from a different type's
/// lexicon. Prompts read "t<task>p<type> " followed by filler whose alphabet
/// depends on task and type; response filler depends on the task only. With probability `vocab_signal_strength` the label follows the
/// planted rule, otherwise the preferred side is a fair coin flip.
struct SynthSpec {
  int n_pairs = 200;
  int n_pref_types = 2;
  int n_tasks = 2;
  double vocab_signal_strength = 1.0;
  MarginRule margin_rule = MarginRule::gap;
  std::uint64_t seed = 0;
  std::string source = "synth";
  std::string id_prefix = "p";
  int prompt_len = 8;
  int response_len = 16;
  bool cross_conflict = false;
  /// Own markers in the rejected response are drawn from [0, max_loser_markers];
  /// the chosen response always carries that many plus the gap.
  int max_loser_markers = 0;
  /// Label reliability grows with the gap: the rule is followed with
  /// probability s + (1 - s)(gap - 1)/3 instead of s, so large-gap pairs are
  /// never flipped.
  bool gap_dependent_noise = false;

  void validate() const;
};

inline constexpr int kMarkersPerType = 4;
inline constexpr int kMaxPrefTypes = 6;

std::string pref_type_name(int index);
std::string task_name(int index);
/// Index of a synthetic pref_type name, or nullopt for foreign names.
std::optional<int> pref_type_index(std::string_view name);
/// Marker bytes owned by a synthetic preference type.
std::array<char, kMarkersPerType> type_markers(int type_index);

/// Planted quality of a response for a preference type: own markers minus
/// markers of every other type.
int planted_quality(std::string_view response, int type_index);
/// Rule-based classifier over the planted markers. Returns the side with the
/// higher planted quality (A on ties).
Side planted_oracle_preference(const PreferencePair& pair);

std::vector<PreferencePair> synth_generate(const SynthSpec& spec);

// JSONL ingestion

std::string to_jsonl(const PreferencePair& pair);
std::string to_jsonl(const std::vector<PreferencePair>& pairs);
/// Parses and validates JSONL text. `origin` is used in error messages.
std::vector<PreferencePair> parse_pairs(std::string_view text, const std::string& origin = "<memory>");
std::vector<PreferencePair> load_pairs(const std::string& path);
void save_pairs(const std::string& path, const std::vector<PreferencePair>& pairs);

// Dataset manipulation. All operations are pure functions of (input, seed).

std::vector<ClassifierExample> balance_and_shuffle(const std::vector<PreferencePair>& pairs, std::uint64_t seed);

std::pair<std::vector<PreferencePair>, std::vector<PreferencePair>> split(const std::vector<PreferencePair>& pairs,
                                                                          double ratio, std::uint64_t seed);

const std::string& tag_value(const PreferencePair& pair, std::string_view tag_key);

std::vector<PreferencePair> representative_subset(const std::vector<PreferencePair>& pairs, int per_tag_count,
                                                  std::string_view tag_key, std::uint64_t seed);

std::vector<PreferencePair> exclude_by_tag(const std::vector<PreferencePair>& pool,
                                           const std::set<std::string>& excluded_sources);

/// Same pairs with the preferred response moved to side A. Probing on this
/// order keeps the label's side out of the representation.
std::vector<PreferencePair> chosen_first(std::vector<PreferencePair> pairs);

}  // namespace lrhp
