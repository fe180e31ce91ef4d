#include <doctest.h>

#include <cmath>
#include <random>

#include "abstain/attacks.hpp"
#include "test_support.hpp"

using namespace abstain;

namespace {

// Two-class linear classifier with z_1 - z_0 = w . x + b.
Classifier linear_binary(float w0, float w1, float b) {
  Network net({LayerSpec::dense(2, 2)}, 1);
  net.parameters()[0] = Tensor({2, 2}, {0.0f, 0.0f, w0, w1});
  net.parameters()[1] = Tensor({2}, {0.0f, b});
  return Classifier(net, 2, false);
}

double linear_margin(float w0, float w1, float b, const Tensor& x) {
  return std::abs(w0 * x[0] + w1 * x[1] + b) / (std::abs(w0) + std::abs(w1));
}

Classifier random_abstainer(std::uint64_t seed) {
  return Classifier(Network(mlp_layers(2, {12, 12}, 4), seed), 3, true);
}

}  // namespace

TEST_CASE("project clamps into the ball and the box") {
  const Tensor x = Tensor::vector({0.5f, 0.02f, 0.97f});
  const Tensor inside = Tensor::vector({0.55f, 0.0f, 1.0f});
  CHECK(project(inside, x, 0.1) == inside);
  const Tensor p = project(Tensor::vector({0.9f, -0.5f, 2.0f}), x, 0.1);
  CHECK(p[0] == doctest::Approx(0.6));
  CHECK(p[1] == 0.0f);
  CHECK(p[2] == 1.0f);
  CHECK(project(p, x, 0.1) == p);
  CHECK(project(Tensor::vector({0.3f, 0.3f, 0.3f}), x, 0.0) == x);
}

TEST_CASE("step size schedules") {
  CHECK(step_size(StepSchedule::constant(), 0, 100, 0.3) == doctest::Approx(0.006));
  CHECK(step_size(StepSchedule::exponential(), 0, 10, 8.0 / 255) == doctest::Approx(4.0 / 255));
  CHECK(step_size(StepSchedule::exponential(), 2, 10, 8.0 / 255) == doctest::Approx(4.0 / 255 * 0.64));
  CHECK(step_size(StepSchedule::harmonic(), 0, 100, 0.3) == doctest::Approx(0.06));
  CHECK(step_size(StepSchedule::harmonic(), 5, 100, 0.3) == doctest::Approx(0.03));
  StepSchedule fixed;
  fixed.step = 0.01;
  CHECK(step_size(fixed, 7, 100, 0.3) == doctest::Approx(0.01));
  CHECK(schedule_from_string(to_string(ScheduleKind::harmonic)) == ScheduleKind::harmonic);
  CHECK_THROWS(schedule_from_string("cosine"));
}

TEST_CASE("pgd config validation") {
  PGDConfig cfg;
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.iterations = 5;
  cfg.stop = StopRule::converge;
  cfg.threshold = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.threshold = 0.1;
  cfg.epsilon = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("pgd on degenerate inputs") {
  SUBCASE("constant classifier") {
    Classifier clf = random_abstainer(3);
    clf.network().parameters()[0].fill(0.0f);
    const Tensor x = Tensor::vector({0.4f, 0.6f});
    PGDConfig cfg;
    cfg.epsilon = 0.3;
    cfg.iterations = 20;
    cfg.early_stop = false;
    const auto res = pgd_attack(clf, x, 0, cfg);
    CHECK(res.adversarial == x);
    CHECK(res.success == is_adversarial(clf, x, 0));
  }
  SUBCASE("zero radius") {
    const Classifier clf = random_abstainer(4);
    const Tensor x = Tensor::vector({0.4f, 0.6f});
    PGDConfig cfg;
    cfg.epsilon = 0.0;
    cfg.iterations = 10;
    cfg.early_stop = false;
    CHECK(pgd_attack(clf, x, 0, cfg).adversarial == x);
  }
}

TEST_CASE("pgd crosses a nearby linear boundary") {
  const Classifier clf = linear_binary(1.0f, -2.0f, 0.1f);
  const Tensor x = Tensor::vector({0.3f, 0.4f});  // w.x + b = -0.4, class 0
  REQUIRE(clf.predict(x).is(0));
  const double margin = linear_margin(1.0f, -2.0f, 0.1f, x);
  PGDConfig cfg;
  cfg.epsilon = margin + 0.02;
  cfg.iterations = 50;
  const auto res = pgd_attack(clf, x, 0, cfg);
  CHECK(res.success);
  CHECK(clf.predict(res.adversarial).is(1));
  CHECK(res.linf_norm(x) <= cfg.epsilon + 1e-6);

  cfg.epsilon = margin - 0.02;
  CHECK_FALSE(pgd_attack(clf, x, 0, cfg).success);
}

TEST_CASE("radius probes") {
  const Classifier clf = linear_binary(1.0f, -2.0f, 0.1f);
  const Tensor x = Tensor::vector({0.3f, 0.4f});
  const double margin = linear_margin(1.0f, -2.0f, 0.1f, x);
  const PGDConfig probe = default_probe_config(50);
  CHECK_FALSE(attack_succeeds_at_radius(clf, x, 0, 0.0, probe));
  CHECK(attack_succeeds_at_radius(clf, x, 0, margin * 1.05, probe));
  CHECK_FALSE(attack_succeeds_at_radius(clf, x, 0, margin * 0.95, probe));

  const std::vector<double> radii{0.05, 0.1, 0.15, 0.2, 0.25};
  const std::size_t k = first_success_index(clf, x, 0, radii, probe);
  REQUIRE(k < radii.size());
  CHECK(radii[k] > margin);
  if (k > 0) CHECK(radii[k - 1] < margin);
  const std::vector<double> descending{0.2, 0.1};
  CHECK_THROWS(first_success_index(clf, x, 0, descending, probe));
}

TEST_CASE("warm-started probes are monotone in the radius") {
  std::mt19937_64 rng(17);
  const PGDConfig probe = default_probe_config(30);
  for (int trial = 0; trial < 30; ++trial) {
    const Classifier clf = random_abstainer(rng());
    const Tensor x = testsupport::random_tensor(rng, {2});
    const auto label = argmax(clf.logits(x).values());
    Tensor found;
    for (double r1 : {0.02, 0.05, 0.1, 0.2}) {
      if (!attack_succeeds_at_radius(clf, x, label, r1, probe, nullptr, &found)) continue;
      for (double r2 : {r1 * 1.5, r1 * 3}) CHECK(attack_succeeds_at_radius(clf, x, label, r2, probe, &found));
      break;
    }
  }
}

TEST_CASE("attack results respect the ball, the box, and the success definition") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const Classifier clf = random_abstainer(rng());
    const Tensor x = testsupport::random_tensor(rng, {2});
    PGDConfig cfg;
    cfg.epsilon = 0.05 + 0.01 * (trial % 10);
    cfg.iterations = 30;
    cfg.loss = static_cast<AttackLossVariant>(trial % 5);
    cfg.schedule = trial % 3 == 0 ? StepSchedule::harmonic() : StepSchedule::constant();
    cfg.early_stop = trial % 2 == 0;
    cfg.restarts = trial % 4 == 0 ? 2 : 0;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const std::size_t y = trial % 3;
    const auto res = pgd_attack(clf, x, y, cfg);
    CHECK(res.linf_norm(x) <= cfg.epsilon + 1e-6);
    for (float v : res.adversarial.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    CHECK(res.success == is_adversarial(clf, res.adversarial, y));
    const auto again = pgd_attack(clf, x, y, cfg);
    CHECK(again.adversarial == res.adversarial);
    CHECK(again.iterations == res.iterations);
  }
}

TEST_CASE("pgd stopping rules") {
  const Classifier clf = random_abstainer(8);
  const Tensor x = Tensor::vector({0.5f, 0.5f});
  PGDConfig cfg;
  cfg.epsilon = 0.2;
  cfg.iterations = 40;
  cfg.early_stop = false;
  cfg.stop = StopRule::converge;
  cfg.threshold = 1e6;  // any change counts as converged
  CHECK(pgd_attack(clf, x, 0, cfg).iterations == 1);

  cfg.stop = StopRule::fixed;
  CHECK(pgd_attack(clf, x, 0, cfg).iterations == 40);

  const SuccessJudge always = [](const Tensor&) { return true; };
  cfg.early_stop = true;
  const auto judged = pgd_attack(clf, x, 0, cfg, nullptr, &always);
  CHECK(judged.success);
  CHECK(judged.iterations == 0);
}

TEST_CASE("cross-entropy objective raises the loss") {
  const Classifier clf(Network(mlp_layers(2, {8}, 3), 5), 3, false);
  const Tensor x = Tensor::vector({0.5f, 0.5f});
  PGDConfig cfg;
  cfg.epsilon = 0.1;
  cfg.iterations = 10;
  cfg.early_stop = false;
  cfg.objective = PgdObjective::cross_entropy;
  const auto res = pgd_attack(clf, x, 1, cfg);
  CHECK(res.final_loss > natural_loss(clf.probabilities(x), 1));
}

TEST_CASE("numeric failures are recorded, not thrown") {
  Classifier clf = random_abstainer(2);
  clf.network().parameters()[0].fill(3e38f);
  PGDConfig cfg;
  cfg.epsilon = 0.1;
  cfg.iterations = 5;
  const auto res = pgd_attack(clf, Tensor::vector({0.9f, 0.9f}), 0, cfg);
  CHECK(res.numeric_failure);
  CHECK_FALSE(res.success);
  CHECK_FALSE(res.failure.empty());
}
