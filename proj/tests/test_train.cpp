#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "abstain/train.hpp"
#include "test_support.hpp"

using namespace abstain;

namespace {

// Two square blobs of half-width 0.1 centred at (0.25, 0.5) and (0.75, 0.5):
// the L-infinity gap between the classes is 0.3.
Dataset blobs(std::uint64_t seed, std::size_t per_class) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.1f, 0.1f);
  Dataset d{"blobs", {2}, 2, {}, {}};
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      d.inputs.push_back(Tensor::vector({(c == 0 ? 0.25f : 0.75f) + u(rng), 0.5f + u(rng)}));
      d.labels.push_back(c);
    }
  }
  return d;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 10;
  cfg.learning_rate = 0.01;
  cfg.epsilon = 0.1;
  cfg.eta = 0.0;
  cfg.attack_iterations = 5;
  cfg.converge_cap = 10;
  cfg.seed = 17;
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST_CASE("adam") {
  Parameters params{Tensor::vector({0.5f, -0.25f, 0.0f}), Tensor({1, 2}, {1.0f, -1.0f})};
  SUBCASE("zero gradients leave parameters unchanged") {
    const Parameters before = params;
    AdamState s = AdamState::for_parameters(params);
    adam_step(params, zeros_like(params), s, 0.1);
    CHECK(params == before);
    CHECK(s.step == 1);
  }
  SUBCASE("first step moves each coordinate by about lr against the gradient sign") {
    const Parameters before = params;
    AdamState s = AdamState::for_parameters(params);
    const Parameters g{Tensor::vector({2.0f, -0.5f, 1e-3f}), Tensor({1, 2}, {-3.0f, 7.0f})};
    adam_step(params, g, s, 0.01);
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (std::size_t i = 0; i < params[k].size(); ++i) {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        const double gi = g[k][i];
        const double expected = before[k][i] - 0.01 * gi / (std::abs(gi) + 1e-8);
        CHECK(params[k][i] == doctest::Approx(expected).epsilon(1e-6));
      }
    }
  }
  SUBCASE("two steps match a straight-line double computation") {
    const Parameters g1{Tensor::vector({0.3f, -0.2f, 0.1f}), Tensor({1, 2}, {0.05f, -0.4f})};
    const Parameters g2{Tensor::vector({-0.1f, -0.6f, 0.2f}), Tensor({1, 2}, {0.5f, 0.25f})};
    const double lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (std::size_t i = 0; i < params[k].size(); ++i) {
        double p = params[k][i];
        const double a = g1[k][i], b = g2[k][i];
        double m = (1 - b1) * a, v = (1 - b2) * a * a;
        p -= lr * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
        m = b1 * m + (1 - b1) * b;
        v = b2 * v + (1 - b2) * b * b;
        p -= lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);
        Parameters run = params;
        AdamState s = AdamState::for_parameters(run);
        adam_step(run, g1, s, lr);
        adam_step(run, g2, s, lr);
        CHECK(std::abs(run[k][i] - p) < 1e-7);
      }
    }
  }
  SUBCASE("errors") {
    AdamState s = AdamState::for_parameters(params);
    Parameters bad = zeros_like(params);
    bad[0][1] = std::nanf("");
    CHECK_THROWS_AS(adam_step(params, bad, s, 0.1), NumericError);
    CHECK_THROWS_AS(adam_step(params, Parameters{params[0]}, s, 0.1), std::invalid_argument);
  }
}

TEST_CASE("learning-rate drop") {
  TrainConfig cfg;
  cfg.lr_drop_epoch = 30;
  CHECK(cfg.learning_rate_at(29) == 1e-3);
  CHECK(cfg.learning_rate_at(30) == 1e-4);
  cfg.lr_drop_epoch.reset();
  CHECK(cfg.learning_rate_at(39) == 1e-3);
}

TEST_CASE("training attack sampling") {
  TrainConfig cfg;
  std::mt19937_64 rng(8);
  SUBCASE("singleton pool") {
    cfg.pool = {AttackLossVariant::sum};
    for (int i = 0; i < 20; ++i) CHECK(sample_training_attack(rng, cfg).loss == AttackLossVariant::sum);
  }
  SUBCASE("uniform frequencies") {
    cfg.pool = {AttackLossVariant::abstain, AttackLossVariant::interp};
    std::map<AttackLossVariant, int> count;
    for (int i = 0; i < 10000; ++i) ++count[sample_training_attack(rng, cfg).loss];
    CHECK(std::abs(count[AttackLossVariant::abstain] / 10000.0 - 0.5) < 0.02);
    CHECK(std::abs(count[AttackLossVariant::interp] / 10000.0 - 0.5) < 0.02);
  }
  SUBCASE("schedules follow the loss") {
    cfg.epsilon = 0.3;
    for (auto style : {AttackStyle::converge, AttackStyle::fixed}) {
      cfg.attack_style = style;
      for (int i = 0; i < 50; ++i) {
        const PGDConfig p = sample_training_attack(rng, cfg);
        CHECK_FALSE(p.early_stop);
        CHECK(p.epsilon == 0.3);
        if (p.loss == AttackLossVariant::interp) {
          CHECK(p.schedule.kind == ScheduleKind::constant);
          CHECK(p.iterations == 10);
          CHECK(step_size(p.schedule, 0, p.iterations, p.epsilon) == doctest::Approx(0.06));
        } else if (style == AttackStyle::converge) {
          CHECK(p.schedule.kind == ScheduleKind::harmonic);
          CHECK(p.stop == StopRule::converge);
          CHECK(p.threshold == 0.1);
          CHECK(p.iterations == cfg.converge_cap);
        } else {
          CHECK(p.schedule.kind == ScheduleKind::exponential);
          CHECK(p.iterations == 10);
        }
      }
    }
  }
  cfg.pool.clear();
  CHECK_THROWS(sample_training_attack(rng, cfg));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate(true));
  cfg.pool = {AttackLossVariant::cw};
  CHECK_THROWS(cfg.validate(true));
  CHECK_NOTHROW(cfg.validate(false));
  cfg.batch_size = 0;
  CHECK_THROWS(cfg.validate(false));
}

TEST_CASE("adversarial training") {
  const Dataset data = blobs(1, 40);
  const Classifier init(Network(mlp_layers(2, {16}, 2), 3), 2, false);
  TrainConfig cfg = quick_config();

  SUBCASE("zero epochs returns the initial model") {
    cfg.epochs = 0;
    const auto r = adversarial_train(data, init, cfg);
    CHECK(r.model == init);
    CHECK(r.curve.empty());
  }

  SUBCASE("separable blobs with gap above 2 eps reach zero robust error") {
    cfg.epochs = 30;
    const auto r = adversarial_train(data, init, cfg);
    CHECK(r.curve.back().smoothed < r.curve.front().smoothed);
    PGDConfig attack;
    attack.epsilon = cfg.epsilon;
    attack.iterations = 50;
    attack.restarts = 2;
    int robust_errors = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!r.model.predict(data.inputs[i]).is(data.labels[i]) ||
          pgd_attack(r.model, data.inputs[i], data.labels[i], attack).success) {
        ++robust_errors;
      }
    }
    CHECK(robust_errors == 0);
  }

  SUBCASE("rejects abstaining models and mismatched data") {
    CHECK_THROWS(adversarial_train(data, Classifier(Network(mlp_layers(2, {4}, 3), 1), 2, true), cfg));
    CHECK_THROWS(adversarial_train(data, Classifier(Network(mlp_layers(3, {4}, 2), 1), 2, false), cfg));
  }
}

TEST_CASE("training is deterministic across thread counts") {
  const Dataset data = blobs(2, 15);
  const Classifier init(Network(mlp_layers(2, {8}, 3), 4), 2, true);
  TrainConfig cfg = quick_config();
  cfg.eta = 0.02;
  const auto a = carl_train(data, init, cfg);
  cfg.threads = 3;
  const auto b = carl_train(data, init, cfg);
  CHECK(a.model == b.model);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].loss == b.curve[i].loss);
  cfg.seed = 18;
  CHECK_FALSE(carl_train(data, init, cfg).model == a.model);
}

TEST_CASE("CARL with zero weights ignores the attacks") {
  const Dataset data = blobs(3, 15);
  const Classifier init(Network(mlp_layers(2, {8}, 3), 5), 2, true);
  TrainConfig cfg = quick_config();
  cfg.lambda = 0.0;
  cfg.eta = 0.0;
  cfg.pool = {AttackLossVariant::abstain};
  const auto a = carl_train(data, init, cfg);
  cfg.pool = {AttackLossVariant::interp};
  cfg.epsilon = 0.2;
  const auto b = carl_train(data, init, cfg);
  CHECK(a.model == b.model);
}

TEST_CASE("CARL training lowers its loss and needs an abstain output") {
  const Dataset data = blobs(4, 30);
  const Classifier init(Network(mlp_layers(2, {16}, 3), 6), 2, true);
  TrainConfig cfg = quick_config();
  cfg.epochs = 10;
  const auto r = carl_train(data, init, cfg);
  CHECK(r.curve.back().smoothed < r.curve.front().smoothed);
  CHECK_THROWS(carl_train(data, Classifier(Network(mlp_layers(2, {4}, 2), 1), 2, false), cfg));
}
