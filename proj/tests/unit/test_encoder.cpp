#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "lrhp/encoder.hpp"
#include "lrhp/tokenizer.hpp"
#include "lrhp/util.hpp"

using namespace lrhp;

namespace {

Model classifier_model(std::uint64_t seed = 4) { return test::tiny_model({Head::classifier}, seed); }

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("pair template layout per mode") {
    const auto special = tokenize_pair("", "a", "b", RepresentationMode::special_token, 64);
    CHECK(special == std::vector<TokenId>{tok::kBos, tok::kSep, 'a', tok::kSep, 'b', tok::kPreference});
    auto eos = tokenize_pair("", "a", "b", RepresentationMode::eos_token, 64);
    CHECK(eos.back() == tok::kEos);
    eos.back() = tok::kPreference;
    CHECK(eos == special);
    CHECK(tokenize_scored("q", "r", 64) == std::vector<TokenId>{tok::kBos, 'q', tok::kSep, 'r', tok::kEos});
    CHECK(lm_context("q") == std::vector<TokenId>{tok::kBos, 'q', tok::kSep});
  }

  TEST_CASE("every byte value survives encode and decode") {
    std::string all;
    for (int b = 0; b < 256; ++b) all += static_cast<char>(b);
    CHECK(decode(encode_bytes(all)) == all);
    const auto seq = tokenize_pair(all.substr(0, 10), all.substr(100, 20), all.substr(200, 30),
                                   RepresentationMode::special_token, 256);
    CHECK(decode(seq) == all.substr(0, 10) + all.substr(100, 20) + all.substr(200, 30));
  }

  TEST_CASE("long responses are truncated, the prompt never is") {
    const std::string prompt(10, 'p');
    const auto seq = tokenize_pair(prompt, std::string(40, 'a'), std::string(5, 'b'), RepresentationMode::special_token, 32);
    CHECK(seq.size() <= 32);
    CHECK(decode(seq).substr(0, 10) == prompt);
    CHECK_THROWS_AS(tokenize_pair(std::string(40, 'p'), "a", "b", RepresentationMode::special_token, 32), Error);
  }

  TEST_CASE("forward_hidden shape and causality") {
    const Encoder enc(classifier_model());
    std::vector<TokenId> tokens = tokenize_pair("t0p1 ab", "hello", "world", RepresentationMode::special_token, 64);
    const auto h = enc.forward_hidden(tokens);
    REQUIRE(h.size() == 2);
    for (const auto& m : h) {
      CHECK(m.rows() == static_cast<Eigen::Index>(tokens.size()));
      CHECK(m.cols() == 16);
    }
    const Eigen::Index t = 6;
    tokens[static_cast<std::size_t>(t)] = 'z';
    const auto h2 = enc.forward_hidden(tokens);
    for (std::size_t l = 0; l < h.size(); ++l) {
      CHECK(h[l].topRows(t) == h2[l].topRows(t));
      CHECK(h[l].row(t) != h2[l].row(t));
    }
    CHECK(enc.forward_hidden(tokens) == h2);
  }

  TEST_CASE("encode reads the terminal row of the requested layer") {
    const Encoder enc(classifier_model());
    const auto pair = test::small_corpus(1).front();
    const auto h = enc.forward_hidden(enc.tokenize(pair));
    const auto rep = enc.encode(pair);
    CHECK(rep.layer == 2);
    CHECK(rep.vector == h.back().row(h.back().rows() - 1).transpose());
    CHECK(enc.encode(pair, 1).vector == h.front().row(h.front().rows() - 1).transpose());
    CHECK(enc.encode(pair) == rep);
    CHECK_THROWS_AS(enc.encode(pair, 0), Error);
    CHECK_THROWS_AS(enc.encode(pair, 3), Error);
  }

  TEST_CASE("batch encoding equals per-item encoding in any order") {
    const Encoder enc(classifier_model());
    auto pairs = test::small_corpus(9);
    pairs[2].response_a += "extra length";
    const auto batch = enc.encode_batch(pairs, std::nullopt, 3);
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(batch[i] == enc.encode(pairs[i]));
    CHECK(enc.encode_batch({pairs[4]}).front() == enc.encode(pairs[4]));
    std::reverse(pairs.begin(), pairs.end());
    const auto rev = enc.encode_batch(pairs);
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(rev[i] == batch[pairs.size() - 1 - i]);
  }

  TEST_CASE("checkpoint round trip preserves the model and its encodings") {
    const Model m = test::tiny_model({Head::classifier, Head::reward}, 8);
    const std::string bytes = serialize_checkpoint(m);
    const Model back = deserialize_checkpoint(bytes);
    CHECK(back.params() == m.params());
    CHECK(back.config() == m.config());
    CHECK(back.heads() == m.heads());
    CHECK(model_digest(back) == model_digest(m));
    const Encoder a(m), b(back);
    for (const auto& p : test::small_corpus(10, 17)) CHECK(a.encode(p) == b.encode(p));
  }

  TEST_CASE("corrupted checkpoints are detected") {
    const std::string bytes = serialize_checkpoint(classifier_model());
    for (std::size_t pos : {std::size_t{12}, bytes.size() / 2, bytes.size() - 3}) {
      std::string bad = bytes;
      bad[pos] = static_cast<char>(bad[pos] ^ 0x5A);
      try {
        deserialize_checkpoint(bad);
        FAIL("corruption went unnoticed");
      } catch (const Error& e) {
        CHECK((e.category() == ErrorCategory::corruption || e.category() == ErrorCategory::version));
      }
    }
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), Error);
    std::string wrong_version = bytes;
    wrong_version[8] = 9;
    CHECK_THROWS_AS(deserialize_checkpoint(wrong_version), Error);
  }

  TEST_CASE("representation CSV and matrix exports") {
    const Encoder enc(classifier_model());
    const auto reps = enc.encode_batch(test::small_corpus(6));
    CHECK(representations_from_csv(representations_to_csv(reps)) == reps);
    const MatrixXd m = matrix_from_binary(representations_to_matrix(reps));
    REQUIRE(m.rows() == 6);
    for (Eigen::Index i = 0; i < m.rows(); ++i) CHECK(m.row(i).transpose() == reps[static_cast<std::size_t>(i)].vector);
  }

  TEST_CASE("float and double forward passes agree") {
    const Model f = classifier_model();
    const Transformer<double> d = f.cast<double>();
    const auto tokens = tokenize_pair("t1p0 xy", "abc", "def", RepresentationMode::special_token, 64);
    const auto tf = f.forward(tokens);
    const auto td = d.forward(tokens);
    CHECK((tf.out.cast<double>() - td.out).cwiseAbs().maxCoeff() < 1e-4);
  }
}
