#include <doctest.h>

#include <algorithm>
#include <map>

#include "helpers.hpp"
#include "lrhp/corpus.hpp"

using namespace lrhp;

namespace {

std::string record(const std::string& id, const std::string& a, const std::string& b) {
  return R"({"id":")" + id + R"(","prompt":"q","response_a":")" + a + R"(","response_b":")" + b +
         R"(","preferred":"A","tags":{"source":"s","task":"t","pref_type":"x"}})";
}

std::vector<std::string> ids_of(const std::vector<PreferencePair>& pairs) {
  std::vector<std::string> out;
  for (const auto& p : pairs) out.push_back(p.id);
  return out;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("well-formed file keeps ids in order") {
    const auto pairs = parse_pairs(record("x1", "a", "b") + "\n" + record("x2", "c", "d") + "\n" + record("x3", "e", "f"));
    REQUIRE(pairs.size() == 3);
    CHECK(ids_of(pairs) == std::vector<std::string>{"x1", "x2", "x3"});
  }

  TEST_CASE("identical responses are rejected with the line number") {
    const std::string text = record("x1", "a", "b") + "\n" + record("x2", "same", "same") + "\n";
    try {
      parse_pairs(text, "data.jsonl");
      FAIL("expected a validation error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::validation);
      CHECK(std::string(e.what()).find("data.jsonl:2") != std::string::npos);
    }
  }

  TEST_CASE("malformed lines are parse errors") {
    CHECK_THROWS_AS(parse_pairs("{not json"), Error);
    CHECK_THROWS_AS(parse_pairs(R"({"id":"x"})"), Error);
  }

  TEST_CASE("1000 generated pairs survive a JSONL round trip") {
    SynthSpec s;
    s.n_pairs = 1000;
    s.seed = 11;
    s.cross_conflict = true;
    const auto pairs = synth_generate(s);
    const auto back = parse_pairs(to_jsonl(pairs));
    REQUIRE(back.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(back[i] == pairs[i]);
  }

  TEST_CASE("balance_and_shuffle balances labels exactly") {
    const auto even = balance_and_shuffle(test::small_corpus(100), 7);
    CHECK(std::count_if(even.begin(), even.end(), [](const auto& e) { return e.label == 0; }) == 50);

    for (int n : {1, 2, 7, 101}) {
      for (std::uint64_t seed : {0u, 1u, 2u}) {
        const auto ex = balance_and_shuffle(test::small_corpus(n), seed);
        const auto zeros = std::count_if(ex.begin(), ex.end(), [](const auto& e) { return e.label == 0; });
        CHECK(std::abs(2 * zeros - n) <= 1);
      }
    }
  }

  TEST_CASE("labels point at the preferred response") {
    const auto pairs = test::small_corpus(30);
    const auto ex = balance_and_shuffle(pairs, 5);
    REQUIRE(ex.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(ex[i].pair_id == pairs[i].id);
      CHECK(ex[i].ordered_responses[static_cast<std::size_t>(ex[i].label)] == pairs[i].chosen());
      const auto f = ex[i].flipped();
      CHECK(f.ordered_responses[static_cast<std::size_t>(f.label)] == pairs[i].chosen());
    }
    CHECK(balance_and_shuffle(pairs, 5) == ex);
  }

  TEST_CASE("split is disjoint, deterministic and covers the input") {
    const auto pairs = test::small_corpus(10);
    const auto [train, test] = split(pairs, 0.8, 4);
    CHECK(train.size() == 8);
    CHECK(test.size() == 2);
    auto all = ids_of(train);
    for (const auto& id : ids_of(test)) {
      CHECK(std::find(all.begin(), all.end(), id) == all.end());
      all.push_back(id);
    }
    auto expected = ids_of(pairs);
    std::sort(all.begin(), all.end());
    std::sort(expected.begin(), expected.end());
    CHECK(all == expected);
    CHECK(split(pairs, 0.8, 4) == std::make_pair(train, test));
  }

  TEST_CASE("synth_generate splits types evenly and is reproducible") {
    SynthSpec s;
    s.n_pairs = 200;
    s.seed = 9;
    const auto pairs = synth_generate(s);
    std::map<std::string, int> per_type;
    for (const auto& p : pairs) ++per_type[p.tags.pref_type];
    REQUIRE(per_type.size() == 2);
    for (const auto& [t, n] : per_type) CHECK(n == 100);
    CHECK(synth_generate(s) == pairs);
  }

  TEST_CASE("planted oracle recovers every label at full signal strength") {
    for (bool conflict : {false, true}) {
      SynthSpec s;
      s.n_pairs = 500;
      s.seed = 21;
      s.cross_conflict = conflict;
      s.max_loser_markers = 2;
      for (const auto& p : synth_generate(s)) CHECK(planted_oracle_preference(p) == p.preferred);
    }
  }

  TEST_CASE("margin labels follow the planted gap") {
    SynthSpec s;
    s.n_pairs = 200;
    s.seed = 2;
    for (const auto& p : synth_generate(s)) {
      REQUIRE(p.margin_label.has_value());
      const int t = *pref_type_index(p.tags.pref_type);
      CHECK(planted_quality(p.chosen(), t) - planted_quality(p.rejected(), t) >= *p.margin_label);
    }
    s.margin_rule = MarginRule::none;
    for (const auto& p : synth_generate(s)) CHECK_FALSE(p.margin_label.has_value());
  }

  TEST_CASE("representative_subset draws per tag value from the input") {
    const auto pairs = test::small_corpus(40);
    const auto sub = representative_subset(pairs, 5, "pref_type", 3);
    CHECK(sub.size() == 10);
    std::map<std::string, int> counts;
    const auto all = ids_of(pairs);
    for (const auto& p : sub) {
      ++counts[p.tags.pref_type];
      CHECK(std::find(all.begin(), all.end(), p.id) != all.end());
    }
    for (const auto& [t, n] : counts) CHECK(n == 5);
    CHECK_THROWS_AS(representative_subset(pairs, 21, "pref_type", 3), Error);
  }

  TEST_CASE("exclude_by_tag removes exactly the matching sources") {
    auto pairs = test::small_corpus(12);
    for (std::size_t i = 0; i < pairs.size(); i += 3) pairs[i].tags.source = "anchor";
    const auto kept = exclude_by_tag(pairs, {"anchor"});
    CHECK(kept.size() == pairs.size() - 4);
    for (const auto& p : kept) CHECK(p.tags.source != "anchor");
    CHECK(exclude_by_tag(pairs, {}) == pairs);
  }

  TEST_CASE("chosen_first moves the preferred response to side A") {
    const auto pairs = test::small_corpus(20);
    const auto canon = chosen_first(pairs);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(canon[i].preferred == Side::A);
      CHECK(canon[i].response_a == pairs[i].chosen());
      CHECK(canon[i].response_b == pairs[i].rejected());
    }
  }

  TEST_CASE("invalid synthetic specs are rejected") {
    SynthSpec s;
    s.vocab_signal_strength = 1.5;
    CHECK_THROWS_AS(synth_generate(s), Error);
    s = {};
    s.max_loser_markers = 20;
    CHECK_THROWS_AS(synth_generate(s), Error);
  }
}
