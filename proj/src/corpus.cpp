#include "lrhp/corpus.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "lrhp/types.hpp"
#include "lrhp/util.hpp"

namespace lrhp {

using nlohmann::json;

namespace {

constexpr std::string_view kFiller = "abcdefghijklmnopqrstuvwxyz";

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Filler draws from a 10-letter window of the alphabet starting at `start`.
std::string random_filler(std::mt19937_64& rng, int len, int start) {
  std::uniform_int_distribution<int> pick(0, 9);
  std::string s(static_cast<std::size_t>(len), 'a');
  for (auto& c : s) c = kFiller[static_cast<std::size_t>((start + pick(rng)) % 26)];
  return s;
}

// Prompts depend on both task and type; responses only on the task.
int prompt_window(int task, int type) { return 4 * task + 13 * type; }
int response_window(int task) { return 4 * task; }

void place_markers(std::mt19937_64& rng, std::string& text, const std::vector<char>& markers) {
  std::vector<std::size_t> slots(text.size());
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  std::shuffle(slots.begin(), slots.end(), rng);
  for (std::size_t i = 0; i < markers.size(); ++i) text[slots[i]] = markers[i];
}

}  // namespace

void SynthSpec::validate() const {
  require(n_pairs > 0, ErrorCategory::validation, "synth: n_pairs must be positive");
  require(n_pref_types >= 1 && n_pref_types <= kMaxPrefTypes, ErrorCategory::validation,
          "synth: n_pref_types must be in [1, " + std::to_string(kMaxPrefTypes) + "]");
  require(n_tasks >= 1 && n_tasks <= 10, ErrorCategory::validation, "synth: n_tasks must be in [1, 10]");
  require(vocab_signal_strength >= 0.0 && vocab_signal_strength <= 1.0, ErrorCategory::validation,
          "synth: vocab_signal_strength must be in [0, 1]");
  require(prompt_len >= 5, ErrorCategory::validation, "synth: prompt_len must be >= 5");
  require(max_loser_markers >= 0 && max_loser_markers + 4 <= response_len, ErrorCategory::validation,
          "synth: max_loser_markers must be in [0, response_len - 4]");
  require(response_len >= 8, ErrorCategory::validation, "synth: response_len must be >= 8");
}

std::string pref_type_name(int index) { return "type" + std::to_string(index); }
std::string task_name(int index) { return "task" + std::to_string(index); }

std::optional<int> pref_type_index(std::string_view name) {
  if (name.size() != 5 || name.substr(0, 4) != "type") return std::nullopt;
  int d = name[4] - '0';
  if (d < 0 || d >= kMaxPrefTypes) return std::nullopt;
  return d;
}

std::array<char, kMarkersPerType> type_markers(int type_index) {
  std::array<char, kMarkersPerType> out{};
  for (int i = 0; i < kMarkersPerType; ++i) out[static_cast<std::size_t>(i)] = static_cast<char>('A' + kMarkersPerType * type_index + i);
  return out;
}

int planted_quality(std::string_view response, int type_index) {
  int q = 0;
  for (char c : response) {
    if (c < 'A' || c >= 'A' + kMarkersPerType * kMaxPrefTypes) continue;
    q += ((c - 'A') / kMarkersPerType == type_index) ? 1 : -1;
  }
  return q;
}

Side planted_oracle_preference(const PreferencePair& pair) {
  auto t = pref_type_index(pair.tags.pref_type);
  require(t.has_value(), ErrorCategory::validation, "pair '" + pair.id + "' has no planted preference type");
  return planted_quality(pair.response_b, *t) > planted_quality(pair.response_a, *t) ? Side::B : Side::A;
}

std::vector<PreferencePair> synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> gap_dist(1, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  std::vector<PreferencePair> out;
  out.reserve(static_cast<std::size_t>(spec.n_pairs));
  for (int i = 0; i < spec.n_pairs; ++i) {
    const int type = i % spec.n_pref_types;
    const int task = (i / spec.n_pref_types) % spec.n_tasks;
    const auto own = type_markers(type);
    std::uniform_int_distribution<int> marker_pick(0, kMarkersPerType - 1);

    const int gap = gap_dist(rng);
    const int loser_count = std::uniform_int_distribution<int>(0, spec.max_loser_markers)(rng);
    std::vector<char> win_marks, lose_marks;
    for (int k = 0; k < loser_count + gap; ++k) win_marks.push_back(own[static_cast<std::size_t>(marker_pick(rng))]);
    for (int k = 0; k < loser_count; ++k) lose_marks.push_back(own[static_cast<std::size_t>(marker_pick(rng))]);
    if (spec.cross_conflict && spec.n_pref_types > 1) {
      int other = (type + 1 + std::uniform_int_distribution<int>(0, spec.n_pref_types - 2)(rng)) % spec.n_pref_types;
      const auto foreign = type_markers(other);
      const int n_foreign = std::uniform_int_distribution<int>(1, 2)(rng);
      for (int k = 0; k < n_foreign; ++k) lose_marks.push_back(foreign[static_cast<std::size_t>(marker_pick(rng))]);
    }

    PreferencePair p;
    p.id = spec.id_prefix + std::to_string(i);
    std::string prompt = "t" + std::to_string(task) + "p" + std::to_string(type) + " ";
    prompt += random_filler(rng, spec.prompt_len - 5, prompt_window(task, type));
    p.prompt = std::move(prompt);

    std::string winner, loser;
    do {
      winner = random_filler(rng, spec.response_len, response_window(task));
      loser = random_filler(rng, spec.response_len, response_window(task));
      place_markers(rng, winner, win_marks);
      place_markers(rng, loser, lose_marks);
    } while (winner == loser);

    const bool winner_on_a = coin(rng);
    p.response_a = winner_on_a ? winner : loser;
    p.response_b = winner_on_a ? loser : winner;
    Side planted = winner_on_a ? Side::A : Side::B;
    double follow = spec.vocab_signal_strength;
    if (spec.gap_dependent_noise) follow += (1.0 - follow) * (gap - 1) / 3.0;
    if (unit(rng) >= follow) planted = coin(rng) ? Side::A : Side::B;
    p.preferred = planted;
    p.tags = {spec.source, task_name(task), pref_type_name(type)};
    if (spec.margin_rule == MarginRule::gap) p.margin_label = gap;
    out.push_back(std::move(p));
  }
  return out;
}

// JSONL

std::string to_jsonl(const PreferencePair& pair) {
  json j;
  j["id"] = pair.id;
  j["prompt"] = pair.prompt;
  j["response_a"] = pair.response_a;
  j["response_b"] = pair.response_b;
  j["preferred"] = pair.preferred == Side::A ? "A" : "B";
  j["tags"] = {{"source", pair.tags.source}, {"task", pair.tags.task}, {"pref_type", pair.tags.pref_type}};
  if (pair.margin_label) j["margin_label"] = *pair.margin_label;
  return j.dump();
}

std::string to_jsonl(const std::vector<PreferencePair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += to_jsonl(p);
    out += '\n';
  }
  return out;
}

namespace {

PreferencePair pair_from_json(const json& j, const std::string& where) {
  auto field = [&](const char* name) -> const json& {
    if (!j.contains(name)) fail(ErrorCategory::parse, where + ": missing field '" + name + "'");
    return j.at(name);
  };
  auto text = [&](const json& v, const char* name) {
    if (!v.is_string()) fail(ErrorCategory::parse, where + ": field '" + name + "' must be a string");
    return v.get<std::string>();
  };
  PreferencePair p;
  p.id = text(field("id"), "id");
  p.prompt = text(field("prompt"), "prompt");
  p.response_a = text(field("response_a"), "response_a");
  p.response_b = text(field("response_b"), "response_b");
  const std::string pref = text(field("preferred"), "preferred");
  if (pref == "A") {
    p.preferred = Side::A;
  } else if (pref == "B") {
    p.preferred = Side::B;
  } else {
    fail(ErrorCategory::parse, where + ": 'preferred' must be \"A\" or \"B\"");
  }
  const json& tags = field("tags");
  if (!tags.is_object()) fail(ErrorCategory::parse, where + ": 'tags' must be an object");
  auto tag = [&](const char* name) {
    if (!tags.contains(name)) fail(ErrorCategory::parse, where + ": missing tag '" + name + "'");
    return text(tags.at(name), name);
  };
  p.tags = {tag("source"), tag("task"), tag("pref_type")};
  if (j.contains("margin_label") && !j.at("margin_label").is_null()) {
    const json& m = j.at("margin_label");
    if (!m.is_number_integer()) fail(ErrorCategory::parse, where + ": 'margin_label' must be an integer");
    p.margin_label = m.get<int>();
  }
  return p;
}

}  // namespace

std::vector<PreferencePair> parse_pairs(std::string_view text, const std::string& origin) {
  std::vector<PreferencePair> out;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    const std::string where = origin + ":" + std::to_string(line_no);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(ErrorCategory::parse, where + ": malformed JSON record");
    PreferencePair p = pair_from_json(j, where);
    if (p.response_a == p.response_b)
      fail(ErrorCategory::validation, where + ": response_a equals response_b (pair '" + p.id + "')");
    if (p.margin_label && (*p.margin_label < 1 || *p.margin_label > 4))
      fail(ErrorCategory::validation, where + ": margin_label must be in 1..4");
    if (!ids.insert(p.id).second) fail(ErrorCategory::validation, where + ": duplicate id '" + p.id + "'");
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PreferencePair> load_pairs(const std::string& path) { return parse_pairs(read_file(path), path); }

void save_pairs(const std::string& path, const std::vector<PreferencePair>& pairs) {
  write_file(path, to_jsonl(pairs));
}

// Manipulation

std::vector<ClassifierExample> balance_and_shuffle(const std::vector<PreferencePair>& pairs, std::uint64_t seed) {
  require(!pairs.empty(), ErrorCategory::invalid_request, "balance_and_shuffle: empty input");
  // The first ceil(N/2) pairs of a seeded permutation put the preferred
  // response first (label 0); the rest put it second (label 1).
  const auto perm = seeded_permutation(pairs.size(), seed);
  const std::size_t n_first = (pairs.size() + 1) / 2;
  std::vector<int> label(pairs.size(), 1);
  for (std::size_t k = 0; k < n_first; ++k) label[perm[k]] = 0;

  std::vector<ClassifierExample> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    ClassifierExample ex{p.id, p.prompt, {p.chosen(), p.rejected()}, 0};
    out.push_back(label[i] == 0 ? ex : ex.flipped());
  }
  return out;
}

std::pair<std::vector<PreferencePair>, std::vector<PreferencePair>> split(const std::vector<PreferencePair>& pairs,
                                                                          double ratio, std::uint64_t seed) {
  require(ratio > 0.0 && ratio < 1.0, ErrorCategory::invalid_request, "split: ratio must be in (0, 1)");
  const auto n = pairs.size();
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  require(n_train >= 1 && n_train + 1 <= n, ErrorCategory::invalid_request,
          "split: ratio " + format_double(ratio) + " leaves an empty split for " + std::to_string(n) + " pairs");
  auto perm = seeded_permutation(n, seed);
  std::vector<std::size_t> train_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::pair<std::vector<PreferencePair>, std::vector<PreferencePair>> out;
  for (auto i : train_idx) out.first.push_back(pairs[i]);
  for (auto i : test_idx) out.second.push_back(pairs[i]);
  return out;
}

const std::string& tag_value(const PreferencePair& pair, std::string_view tag_key) {
  if (tag_key == "source") return pair.tags.source;
  if (tag_key == "task") return pair.tags.task;
  if (tag_key == "pref_type") return pair.tags.pref_type;
  fail(ErrorCategory::invalid_request, "unknown tag key '" + std::string(tag_key) + "'");
}

std::vector<PreferencePair> representative_subset(const std::vector<PreferencePair>& pairs, int per_tag_count,
                                                  std::string_view tag_key, std::uint64_t seed) {
  require(per_tag_count >= 1, ErrorCategory::invalid_request, "representative_subset: per_tag_count must be >= 1");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pairs.size(); ++i) groups[tag_value(pairs[i], tag_key)].push_back(i);

  std::vector<std::size_t> chosen;
  std::uint64_t group_seed = seed;
  for (const auto& [value, members] : groups) {
    if (members.size() < static_cast<std::size_t>(per_tag_count))
      fail(ErrorCategory::invalid_request, "representative_subset: tag '" + value + "' has only " +
                                               std::to_string(members.size()) + " pairs, need " +
                                               std::to_string(per_tag_count));
    auto perm = seeded_permutation(members.size(), group_seed++);
    for (int k = 0; k < per_tag_count; ++k) chosen.push_back(members[perm[static_cast<std::size_t>(k)]]);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<PreferencePair> out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(pairs[i]);
  return out;
}

std::vector<PreferencePair> exclude_by_tag(const std::vector<PreferencePair>& pool,
                                           const std::set<std::string>& excluded_sources) {
  std::vector<PreferencePair> out;
  std::copy_if(pool.begin(), pool.end(), std::back_inserter(out),
               [&](const PreferencePair& p) { return !excluded_sources.contains(p.tags.source); });
  return out;
}

std::vector<PreferencePair> chosen_first(std::vector<PreferencePair> pairs) {
  for (auto& p : pairs) {
    if (p.preferred == Side::B) std::swap(p.response_a, p.response_b);
    p.preferred = Side::A;
  }
  return pairs;
}

}  // namespace lrhp
