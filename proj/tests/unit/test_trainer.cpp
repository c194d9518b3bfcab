#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "lrhp/align_eval.hpp"
#include "lrhp/optim.hpp"
#include "lrhp/trainer.hpp"

using namespace lrhp;

namespace {

TrainConfig quick(int steps, int batch = 4) {
  TrainConfig c;
  c.max_steps = steps;
  c.batch_size = batch;
  c.eval_every = 5;
  c.seed = 3;
  return c;
}

std::vector<PreferencePair> with_margin(std::vector<PreferencePair> pairs, int label) {
  for (auto& p : pairs) p.margin_label = label;
  return pairs;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("Adam follows the closed-form trajectory on a quadratic bowl") {
    // f(p) = 0.5 * a * p^2, gradient a * p. The first Adam step moves every
    // coordinate by exactly lr * sign(g) (up to epsilon).
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Vector<double> a(3), p(3);
    a << 1.0, 4.0, 0.25;
    p << 1.0, -2.0, 3.0;
    Optimizer<double> opt({OptimizerConfig::Kind::adam, b1, b2, eps}, 3);
    Vector<double> m = Vector<double>::Zero(3), v = Vector<double>::Zero(3), expect = p;
    for (int t = 1; t <= 3; ++t) {
      const Vector<double> g_expect = a.cwiseProduct(expect);
      m = b1 * m + (1 - b1) * g_expect;
      v = b2 * v + (1 - b2) * g_expect.cwiseAbs2();
      const Vector<double> mh = m / (1 - std::pow(b1, t));
      const Vector<double> vh = v / (1 - std::pow(b2, t));
      expect.array() -= lr * mh.array() / (vh.array().sqrt() + eps);

      const Vector<double> g = a.cwiseProduct(p);
      opt.step(p, g, lr);
      CHECK((p - expect).cwiseAbs().maxCoeff() < 1e-14);
      if (t == 1) {
        CHECK(p(0) == doctest::Approx(0.9).epsilon(1e-7));
        CHECK(p(1) == doctest::Approx(-1.9).epsilon(1e-7));
      }
    }
    CHECK(opt.steps() == 3);
  }

  TEST_CASE("SGD takes a plain gradient step") {
    Vector<double> p(2), g(2);
    p << 1.0, 2.0;
    g << 0.5, -1.0;
    Optimizer<double> opt({OptimizerConfig::Kind::sgd}, 2);
    opt.step(p, g, 0.1);
    CHECK(p(0) == doctest::Approx(0.95));
    CHECK(p(1) == doctest::Approx(2.1));
  }

  TEST_CASE("training is a pure function of data, config and seed") {
    const auto pairs = test::small_corpus(24);
    const auto ex = balance_and_shuffle(pairs, 1);
    auto cfg = quick(10);
    const auto a = train_representation(cfg, ex, test::tiny_config(), ex);
    const auto b = train_representation(cfg, ex, test::tiny_config(), ex);
    CHECK(a.log == b.log);
    CHECK(a.model.params() == b.model.params());
    cfg.threads = 3;
    const auto c = train_representation(cfg, ex, test::tiny_config(), ex);
    CHECK(c.log == a.log);
    CHECK(c.model.params() == a.model.params());
    CHECK(a.log.rows().size() == 10);
    CHECK(a.log.last("heldout_accuracy").has_value());
  }

  TEST_CASE("empty pretraining stage equals single-stage training") {
    const auto pairs = test::small_corpus(16);
    const Model init = test::tiny_model({Head::reward}, 2);
    TwoStageSchedule one;
    one.finetune = {pairs, quick(8)};
    TwoStageSchedule two = one;
    two.pretrain = {{}, quick(50, 16)};
    const auto a = train_reward(one, init);
    const auto b = train_reward(two, init);
    CHECK(a.log == b.log);
    CHECK(a.model.params() == b.model.params());
    CHECK_THROWS_AS(train_reward(TwoStageSchedule{}, init), Error);
  }

  TEST_CASE("reward model fits separable training pairs") {
    SynthSpec s;
    s.n_pairs = 64;
    s.seed = 5;
    s.response_len = 8;
    const auto pairs = synth_generate(s);
    TwoStageSchedule sched;
    auto cfg = quick(150, 16);
    cfg.learning_rate = 3e-3;
    sched.finetune = {pairs, cfg};
    const auto r = train_reward(sched, test::tiny_model({Head::reward}, 6));
    CHECK(preference_accuracy(r.model, pairs) >= 0.95);
  }

  TEST_CASE("zero per-pair margins reproduce unconstrained DPO") {
    const auto pairs = test::small_corpus(12);
    const Model lm = test::tiny_model({Head::lm}, 7);
    DPOConfig plain;
    DPOConfig per_pair;
    per_pair.margin_source = DPOConfig::MarginSource::per_pair;
    MarginMap zeros;
    for (const auto& p : pairs) zeros.emplace_back(p.id, 0.0);
    const auto a = train_dpo(lm, lm, pairs, plain, quick(10));
    const auto b = train_dpo(lm, lm, pairs, per_pair, quick(10), zeros);
    CHECK(a.log == b.log);
    CHECK(a.log.to_csv() == b.log.to_csv());
    CHECK_THROWS_AS(train_dpo(lm, lm, pairs, per_pair, quick(10)), Error);
  }

  TEST_CASE("DPO raises the mean implicit gap on its training pairs") {
    const auto pairs = test::small_corpus(12);
    const Model lm = test::tiny_model({Head::lm}, 8);
    auto cfg = quick(40);
    cfg.learning_rate = 3e-3;
    const auto r = train_dpo(lm, lm, pairs, DPOConfig{}, cfg);
    const auto gaps = dpo_implicit_gaps(r.model, lm, pairs, 0.1);
    double mean = 0.0;
    for (double g : gaps) mean += g / static_cast<double>(gaps.size());
    CHECK(mean > 0.0);
    CHECK(*r.log.last("mean_implicit_gap") == doctest::Approx(mean).epsilon(1e-6));
  }

  TEST_CASE("constant margin labels leave the held-out Spearman undefined") {
    const auto pairs = with_margin(test::small_corpus(12), 2);
    const auto r = train_margin_predictor(test::tiny_model({Head::classifier}, 2), pairs, quick(3), pairs);
    CHECK_FALSE(r.log.last("heldout_spearman").has_value());
    CHECK(r.log.to_csv().find("3,") != std::string::npos);
  }

  TEST_CASE("invalid configurations are rejected") {
    const auto ex = balance_and_shuffle(test::small_corpus(4), 1);
    auto cfg = quick(5, 8);
    CHECK_THROWS_AS(train_representation(cfg, ex, test::tiny_config()), Error);
    cfg = quick(5);
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(train_representation(cfg, ex, test::tiny_config()), Error);
  }

  TEST_CASE("metric log CSV leaves skipped evaluations empty") {
    MetricLog log({"acc"});
    log.record(1, 0.5);
    log.record(2, 0.25, {0.75});
    CHECK(log.to_csv() == "step,loss,acc\n1,0.5,\n2,0.25,0.75\n");
    CHECK(*log.last("acc") == 0.75);
    CHECK_FALSE(log.last("missing").has_value());
  }
}
