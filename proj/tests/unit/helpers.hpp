#pragma once

#include <random>
#include <string>
#include <vector>

#include "lrhp/corpus.hpp"
#include "lrhp/transformer.hpp"

namespace lrhp::test {

inline EncoderConfig tiny_config(int layers = 2, int d = 16, int heads = 2) {
  EncoderConfig c;
  c.d_model = d;
  c.n_layers = layers;
  c.n_heads = heads;
  c.max_seq_len = 64;
  return c;
}

template <typename Scalar = float>
Transformer<Scalar> tiny_model(HeadSet heads, std::uint64_t seed = 1, int layers = 2) {
  Transformer<Scalar> m(tiny_config(layers), heads);
  m.initialize(seed);
  return m;
}

inline std::vector<PreferencePair> small_corpus(int n = 20, std::uint64_t seed = 3) {
  SynthSpec s;
  s.n_pairs = n;
  s.seed = seed;
  s.response_len = 8;
  return synth_generate(s);
}

inline VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace lrhp::test
