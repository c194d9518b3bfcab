#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "lrhp/loss_graphs.hpp"
#include "lrhp/objectives.hpp"

using namespace lrhp;

namespace {

const double kLn2 = std::log(2.0);

// -log sigmoid(z) in long double, written from the definition.
double nls_oracle(long double z) { return static_cast<double>(std::log1p(std::exp(-z))); }

double central(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

}  // namespace

TEST_SUITE("objectives") {
  TEST_CASE("Bradley-Terry fixtures") {
    CHECK(std::abs(bt_reward_loss(0.3, 0.3) - kLn2) < 1e-15);
    CHECK(bt_reward_loss(800.0, 0.0) == 0.0);
    CHECK(std::abs(bt_reward_loss(1.0, 0.0) - nls_oracle(1.0L)) < 1e-15);
    for (double a = -3; a <= 3; a += 0.5)
      for (double b = -3; b <= 3; b += 0.5) {
        const double sum = bt_reward_loss(a, b) + bt_reward_loss(b, a);
        if (a == b) CHECK(std::abs(sum - 2 * kLn2) < 1e-15);
        else CHECK(sum > 2 * kLn2);
      }
  }

  TEST_CASE("Bradley-Terry equals label-1 BCE on the gap") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-50, 50);
    for (int i = 0; i < 1000; ++i) {
      const double w = u(rng), l = u(rng);
      CHECK(bt_reward_loss(w, l) == bce_classification_loss(w - l, 1));
    }
  }

  TEST_CASE("BCE fixtures and gradient") {
    CHECK(std::abs(bce_classification_loss(0.0, 0) - kLn2) < 1e-15);
    CHECK(std::abs(bce_classification_loss(0.0, 1) - kLn2) < 1e-15);
    CHECK(bce_classification_loss(30.0, 1) < 1e-12);
    for (double z : {-4.0, -0.3, 0.0, 1.7}) {
      CHECK(bce_classification_grad(z, 1) == doctest::Approx(sigmoid(z) - 1.0).epsilon(1e-12));
      for (int label : {0, 1})
        CHECK(bce_classification_grad(z, label) ==
              doctest::Approx(central([&](double x) { return bce_classification_loss(x, label); }, z)).epsilon(1e-7));
    }
  }

  TEST_CASE("losses stay finite across the representable range") {
    for (double z : {-700.0, -50.0, 0.0, 50.0, 700.0}) {
      CHECK(std::isfinite(bt_reward_loss(z, 0.0)));
      CHECK(std::isfinite(bce_classification_loss(z, 0)));
      CHECK(std::isfinite(dpo_loss(z, 0.0, 1.0)));
    }
  }

  TEST_CASE("DPO fixtures") {
    for (double beta : {0.01, 0.1, 1.0, 5.0}) CHECK(std::abs(dpo_loss(0.4, 0.4, beta) - kLn2) < 1e-15);
    CHECK(std::abs(dpo_loss(2.0, 0.0, 1.0) - nls_oracle(2.0L)) < 1e-15);
    double prev = dpo_loss(1.0, 0.5, 0.05);
    for (double beta = 0.1; beta < 10; beta *= 2) {
      const double cur = dpo_loss(1.0, 0.5, beta);
      CHECK(cur < prev);
      prev = cur;
    }
  }

  TEST_CASE("constrained DPO reduces to DPO at zero margin and grows with the margin") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-20, 20), ub(0.01, 2);
    for (int i = 0; i < 1000; ++i) {
      const double w = u(rng), l = u(rng), beta = ub(rng);
      CHECK(constrained_dpo_loss(w, l, beta, 0.0) == dpo_loss(w, l, beta));
    }
    CHECK(std::abs(constrained_dpo_loss(2.0, 0.0, 1.0, 1.0) - nls_oracle(1.0L)) < 1e-15);
    CHECK(std::abs(constrained_dpo_loss(2.0, 0.0, 1.0, 1.0) - 0.313262) < 1e-6);
    double prev = constrained_dpo_loss(1.0, 0.0, 0.5, 0.0);
    for (double m = 0.1; m < 3; m += 0.1) {
      const double cur = constrained_dpo_loss(1.0, 0.0, 0.5, m);
      CHECK(cur > prev);
      prev = cur;
    }
    CHECK_THROWS_AS(constrained_dpo_loss(1.0, 0.0, 0.5, -0.1), Error);
  }

  TEST_CASE("pairwise loss gradients match finite differences") {
    for (double w : {-1.3, 0.0, 2.2})
      for (double l : {-0.7, 0.4}) {
        const auto bt = bt_reward_loss_grad(w, l);
        CHECK(bt.d_first == doctest::Approx(central([&](double x) { return bt_reward_loss(x, l); }, w)).epsilon(1e-7));
        CHECK(bt.d_second == doctest::Approx(central([&](double x) { return bt_reward_loss(w, x); }, l)).epsilon(1e-7));
        const auto c = constrained_dpo_loss_grad(w, l, 0.7, 0.3);
        CHECK(c.d_first ==
              doctest::Approx(central([&](double x) { return constrained_dpo_loss(x, l, 0.7, 0.3); }, w)).epsilon(1e-7));
        CHECK(c.d_second ==
              doctest::Approx(central([&](double x) { return constrained_dpo_loss(w, x, 0.7, 0.3); }, l)).epsilon(1e-7));
      }
  }

  TEST_CASE("answer-token cross-entropy") {
    const RowVector<double> uniform = RowVector<double>::Zero(7);
    CHECK(std::abs(ntp_answer_loss(uniform, 3) - std::log(7.0)) < 1e-15);
    RowVector<double> peaked = RowVector<double>::Zero(7);
    peaked(2) = 30.0;
    CHECK(ntp_answer_loss(peaked, 2) < 1e-9);

    std::mt19937_64 rng(3);
    const VectorXd v = test::random_vector(rng, 6);
    RowVector<double> z = v.transpose();
    const RowVector<double> g = ntp_answer_grad(z, 4);
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      const double numeric = central(
          [&](double x) {
            RowVector<double> y = z;
            y(j) = x;
            return ntp_answer_loss(y, 4);
          },
          z(j));
      CHECK(g(j) == doctest::Approx(numeric).epsilon(1e-7));
    }
  }

  TEST_CASE("margin regression loss") {
    CHECK(mse_margin_loss(0.4, 0.4) == 0.0);
    CHECK(mse_margin_loss(0.5, 1.0) == 0.25);
    CHECK(mse_margin_grad(0.2, 0.9) == doctest::Approx(2 * (0.2 - 0.9)));
  }

  TEST_CASE("grad_check is exact on a linear loss") {
    std::mt19937_64 rng(4);
    const VectorXd w = test::random_vector(rng, 30);
    VectorXd x = test::random_vector(rng, 30);
    const LossGraph linear = [&](const VectorXd& p, VectorXd* g) {
      if (g) *g += w;
      return w.dot(p);
    };
    GradCheckOptions o;
    o.probes = 0;
    o.eps = 1e-3;
    const auto r = grad_check(linear, x, o);
    CHECK(r.entries.size() == 30);
    for (const auto& e : r.entries) CHECK(std::abs(e.analytic - e.numeric) < 1e-10);
    CHECK(r.passed());
  }

  TEST_CASE("grad_check names the parameter behind a corrupted gradient") {
    std::mt19937_64 rng(5);
    VectorXd x = test::random_vector(rng, 10);
    const LossGraph broken = [](const VectorXd& p, VectorXd* g) {
      if (g) {
        *g += 2 * p;
        (*g)[7] += 0.5;
      }
      return p.squaredNorm();
    };
    GradCheckOptions o;
    o.probes = 0;
    o.name_of = [](Eigen::Index i) { return "w" + std::to_string(i); };
    const VectorXd before = x;
    const auto r = grad_check(broken, x, o);
    CHECK_FALSE(r.passed());
    CHECK(r.worst_name == "w7");
    CHECK(r.max_rel_error > o.tolerance);
    CHECK(x == before);
    CHECK(r.to_text().find("w7") != std::string::npos);
  }

  TEST_CASE("classification loss on a toy encoder passes the gradient check") {
    auto model = test::tiny_model<double>(objective_heads(Objective::classifier), 3);
    model.params() *= 5.0;
    const auto graph = objective_graph(model, Objective::classifier, {.pair = test::small_corpus(1).front()});
    VectorXd p = model.params();
    GradCheckOptions o;
    o.seed = 9;
    o.name_of = [&](Eigen::Index i) { return model.layout().describe(i); };
    const auto r = grad_check(graph, p, o);
    CHECK(r.max_rel_error <= 1e-4);
  }
}
