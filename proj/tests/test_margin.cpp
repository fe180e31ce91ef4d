#include <doctest.h>

#include <cmath>
#include <random>

#include "abstain/margin.hpp"
#include "test_support.hpp"

using namespace abstain;

namespace {

// z_1 - z_0 = w . x + b
Classifier linear_binary(float w0, float w1, float b) {
  Network net({LayerSpec::dense(2, 2)}, 1);
  net.parameters()[0] = Tensor({2, 2}, {0.0f, 0.0f, w0, w1});
  net.parameters()[1] = Tensor({2}, {0.0f, b});
  return Classifier(net, 2, false);
}

Classifier small_net(std::uint64_t seed) {
  return Classifier(Network(mlp_layers(2, {16, 16}, 2), seed), 2, false);
}

// Nearest differently-labelled grid point by exhaustive scan.
double brute_force_distance(const GridMargin& grid, const Tensor& x, std::size_t label) {
  double best = 1.0;
  const double h = grid.spacing();
  for (std::size_t i = 0; i < grid.points_per_axis(); ++i) {
    for (std::size_t j = 0; j < grid.points_per_axis(); ++j) {
      if (grid.label_at(i, j) == label) continue;
      best = std::min(best, std::max(std::abs(i * h - x[0]), std::abs(j * h - x[1])));
    }
  }
  return best;
}

Dataset random_dataset(std::mt19937_64& rng, std::size_t n) {
  Dataset d{"random", {2}, 2, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    d.inputs.push_back(testsupport::random_tensor(rng, {2}));
    d.labels.push_back(rng() % 2);
  }
  return d;
}

}  // namespace

TEST_CASE("margin method names") {
  for (auto m : {MarginMethod::attack_bisection, MarginMethod::grid_search}) {
    CHECK(margin_method_from_string(to_string(m)) == m);
  }
  CHECK_THROWS(margin_method_from_string("exact"));
}

TEST_CASE("signed margin of a linear classifier") {
  // w = (1, -1), b = 0 at x = (1, 0): |w.x| / ||w||_1 = 1/2, reached at
  // (1/2, 1/2) inside the box.
  const Classifier clf = linear_binary(1.0f, -1.0f, 0.0f);
  const Tensor x = Tensor::vector({1.0f, 0.0f});
  REQUIRE(clf.predict(x).is(1));
  const GridMargin grid(clf, 0.01);

  MarginOptions opts;
  const auto bis = signed_margin(clf, x, 1, opts);
  CHECK(bis.method == MarginMethod::attack_bisection);
  CHECK(bis.certified);
  CHECK(bis.value >= 0.5 - 1e-6);
  CHECK(bis.value <= 0.5 + opts.tolerance + 1e-6);

  opts.method = MarginMethod::grid_search;
  opts.grid = &grid;
  const auto g = signed_margin(clf, x, 1, opts);
  CHECK(g.certified);
  CHECK(std::abs(g.value - 0.5) <= grid.spacing());

  SUBCASE("misclassified points are negative") {
    CHECK(signed_margin(clf, x, 0, opts).value == doctest::Approx(-0.5));
    opts.method = MarginMethod::attack_bisection;
    CHECK(signed_margin(clf, x, 0, opts).value < -0.49);
  }
  SUBCASE("points on the boundary have zero margin") {
    const Tensor on = Tensor::vector({0.5f, 0.5f});
    opts.method = MarginMethod::attack_bisection;
    CHECK(std::abs(signed_margin(clf, on, 0, opts).value) <= opts.tolerance);
    opts.method = MarginMethod::grid_search;
    CHECK(std::abs(signed_margin(clf, on, 0, opts).value) <= grid.spacing() + 1e-12);
  }
}

TEST_CASE("bisection without a flip returns the search radius uncertified") {
  Classifier clf = linear_binary(0.0f, 0.0f, 1.0f);
  MarginOptions opts;
  opts.r_max = 0.7;
  const auto m = signed_margin(clf, Tensor::vector({0.2f, 0.3f}), 1, opts);
  CHECK(m.value == 0.7);
  CHECK_FALSE(m.certified);
  const GridMargin grid(clf, 0.05);
  CHECK(grid.margin(Tensor::vector({0.2f, 0.3f})) == 1.0);
}

TEST_CASE("margin options validation") {
  MarginOptions opts;
  opts.method = MarginMethod::grid_search;
  CHECK_THROWS_AS(opts.validate(), std::invalid_argument);
  opts.method = MarginMethod::attack_bisection;
  opts.max_probes = 0;
  CHECK_THROWS_AS(opts.validate(), std::invalid_argument);
  CHECK_THROWS(GridMargin(linear_binary(1, 1, 0), 0.3));
  CHECK_THROWS_AS(GridMargin(Classifier(Network(mlp_layers(3, {}, 2), 1), 2, false), 0.1), ShapeError);
}

TEST_CASE("ring search matches an exhaustive scan") {
  std::mt19937_64 rng(11);
  for (int net = 0; net < 4; ++net) {
    const Classifier clf = small_net(rng());
    const GridMargin grid(clf, 0.02);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor x = testsupport::random_tensor(rng, {2});
      for (std::size_t label : {0, 1}) {
        CHECK(grid.distance_to_other(x, label) == brute_force_distance(grid, x, label));
      }
    }
  }
}

TEST_CASE("grid margins agree with the analytic linear margin") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  int checked = 0;
  while (checked < 100) {
    const float w0 = u(rng), w1 = u(rng), b = u(rng) * 0.5f;
    const Classifier clf = linear_binary(w0, w1, b);
    const Tensor x = testsupport::random_tensor(rng, {2}, 0.3f, 0.7f);
    const double analytic = std::abs(w0 * x[0] + w1 * x[1] + b) / (std::abs(w0) + std::abs(w1));
    if (analytic > 0.28) continue;  // keep the nearest boundary point inside the box
    ++checked;
    const GridMargin grid(clf, 0.01);
    CHECK(std::abs(grid.margin(x) - analytic) <= grid.spacing());
  }
}

TEST_CASE("margins are 1-Lipschitz up to the grid spacing") {
  std::mt19937_64 rng(13);
  const Classifier clf = small_net(5);
  const GridMargin grid(clf, 0.005);
  const Dataset probe_points = random_dataset(rng, 400);
  // Signed against one fixed label so that pairs compare like with like.
  auto signed_for_class0 = [&](const Tensor& x) { return grid.label_of(x) == 0 ? grid.margin(x) : -grid.margin(x); };
  for (std::size_t i = 0; i + 1 < probe_points.size(); i += 2) {
    const Tensor& a = probe_points.inputs[i];
    const Tensor& b = probe_points.inputs[i + 1];
    CHECK(std::abs(signed_for_class0(a) - signed_for_class0(b)) <= linf_distance(a, b) + 2 * grid.spacing());
  }
}

TEST_CASE("baseline classifier") {
  const Classifier clf = linear_binary(1.0f, -1.0f, 0.0f);
  BaselineConfig cfg;
  std::mt19937_64 rng(21);
  SUBCASE("zero threshold never abstains") {
    for (int i = 0; i < 50; ++i) {
      const Tensor x = testsupport::random_tensor(rng, {2});
      CHECK(baseline_predict(clf, x, cfg) == clf.predict(x));
    }
  }
  const GridMargin grid(clf, 0.001);
  const Tensor close = Tensor::vector({0.6f, 0.5f});  // margin 0.05
  const Tensor far = Tensor::vector({0.8f, 0.2f});    // margin 0.3
  REQUIRE(std::abs(grid.margin(close) - 0.05) <= grid.spacing());
  REQUIRE(std::abs(grid.margin(far) - 0.3) <= grid.spacing());
  cfg.gamma = 0.1;
  cfg.probe = default_probe_config(100);
  CHECK(baseline_predict(clf, close, cfg).is_abstain());
  CHECK(baseline_predict(clf, far, cfg).is(1));
  cfg.grid = &grid;
  CHECK(baseline_predict(clf, close, cfg).is_abstain());
  CHECK(baseline_predict(clf, far, cfg).is(1));
  cfg.gamma = -1;
  CHECK_THROWS(baseline_predict(clf, far, cfg));
}

TEST_CASE("baseline sweeps have nested abstain sets") {
  std::mt19937_64 rng(22);
  const std::vector<double> gammas{0.0, 0.02, 0.05, 0.1, 0.2};
  for (int n = 0; n < 3; ++n) {
    const Classifier clf = small_net(rng());
    for (int i = 0; i < 30; ++i) {
      const Tensor x = testsupport::random_tensor(rng, {2});
      const auto labels = baseline_predict_sweep(clf, x, gammas, default_probe_config(30));
      REQUIRE(labels.size() == gammas.size());
      CHECK(labels[0] == clf.predict(x));
      for (std::size_t k = 1; k < labels.size(); ++k) {
        if (labels[k - 1].is_abstain()) CHECK(labels[k].is_abstain());
        if (!labels[k].is_abstain()) CHECK(labels[k] == clf.predict(x));
      }
    }
  }
}

TEST_CASE("attack margin CDF") {
  std::mt19937_64 rng(31);
  const Classifier clf = small_net(9);
  const Dataset data = random_dataset(rng, 120);
  const std::vector<double> radii{0.0, 0.02, 0.05, 0.1, 0.2, 0.4};
  const auto cdf = estimate_margin_cdf(clf, data, radii, default_probe_config(50));
  REQUIRE(cdf.size() == radii.size());

  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) wrong += clf.predict(data.inputs[i]).is(data.labels[i]) ? 0 : 1;
  CHECK(cdf[0].fraction == doctest::Approx(static_cast<double>(wrong) / data.size()));
  for (std::size_t k = 1; k < cdf.size(); ++k) CHECK(cdf[k].fraction >= cdf[k - 1].fraction);

  // Against certified margins: the attack CDF at r sits between the grid CDF
  // at r - 2h and r + 2h.
  const GridMargin grid(clf, 0.002);
  const auto margins = grid_signed_margins(grid, data);
  const double h = grid.spacing();
  for (const auto& p : cdf) {
    const std::vector<double> around{p.radius - 2 * h, p.radius + 2 * h};
    const auto bounds = empirical_cdf(margins, around);
    CHECK(p.fraction >= bounds[0].fraction);
    CHECK(p.fraction <= bounds[1].fraction);
  }

  const std::vector<double> unsorted{0.2, 0.1};
  CHECK_THROWS(estimate_margin_cdf(clf, data, unsorted, default_probe_config()));
  CHECK_THROWS(estimate_margin_cdf(clf, Dataset{"empty", {2}, 2, {}, {}}, radii, default_probe_config()));
}

TEST_CASE("margin CDF saturates at the box diameter") {
  std::mt19937_64 rng(32);
  const Classifier clf = linear_binary(1.0f, 0.5f, -0.7f);
  const Dataset data = random_dataset(rng, 40);
  const std::vector<double> radii{1.0};
  CHECK(estimate_margin_cdf(clf, data, radii, default_probe_config(100))[0].fraction == 1.0);
}

TEST_CASE("normal CDF") {
  const MarginDistribution d{0.887, 0.427};
  CHECK(normal_cdf(d, 0.887) == doctest::Approx(0.5).epsilon(1e-12));
  // mpmath ncdf(1) to 30 digits
  CHECK(std::abs(normal_cdf(d, 0.887 + 0.427) - 0.841344746068542948585232545632) < 1e-7);
  CHECK(std::abs(std_normal_cdf(-8.0) - 6.22096057427178e-16) < 1e-20);
  double prev = 0;
  for (double x = -3; x <= 3; x += 0.01) {
    const double v = normal_cdf(d, x);
    CHECK(v >= prev);
    prev = v;
  }
  for (double p : {1e-10, 0.01, 0.3, 0.5, 0.77, 0.999}) CHECK(std_normal_cdf(std_normal_quantile(p)) == doctest::Approx(p));
  CHECK_THROWS(std_normal_quantile(0.0));
  CHECK_THROWS(normal_cdf(MarginDistribution{0.0, 0.0}, 1.0));
}

TEST_CASE("normal fit") {
  const MarginDistribution truth{0.887, 0.427};
  SUBCASE("exact points") {
    std::vector<CdfPoint> pts;
    for (double r = 0.1; r < 2.0; r += 0.1) pts.push_back({r, normal_cdf(truth, r)});
    const auto fit = fit_normal(pts);
    CHECK(fit.mu == doctest::Approx(truth.mu).epsilon(1e-6));
    CHECK(fit.sigma == doctest::Approx(truth.sigma).epsilon(1e-6));
    for (double res : fit_residuals(fit, pts)) CHECK(std::abs(res) < 1e-9);
  }
  SUBCASE("two points interpolate") {
    const std::vector<CdfPoint> pts{{0.2, 0.1}, {0.5, 0.6}};
    const auto fit = fit_normal(pts);
    CHECK(normal_cdf(fit, 0.2) == doctest::Approx(0.1));
    CHECK(normal_cdf(fit, 0.5) == doctest::Approx(0.6));
  }
  SUBCASE("noisy quantiles") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> noise(-0.01, 0.01);
    std::vector<CdfPoint> pts;
    for (double r = 0.3; r < 1.6; r += 0.05) pts.push_back({r, std::clamp(normal_cdf(truth, r) + noise(rng), 0.0, 1.0)});
    const auto fit = fit_normal(pts);
    CHECK(fit.mu == doctest::Approx(truth.mu).epsilon(0.05));
    CHECK(fit.sigma == doctest::Approx(truth.sigma).epsilon(0.05));
  }
  SUBCASE("degenerate inputs") {
    const std::vector<CdfPoint> flat{{0.1, 0.3}, {0.2, 0.3}};
    CHECK_THROWS(fit_normal(flat));
    const std::vector<CdfPoint> extremes{{0.1, 0.0}, {0.2, 0.5}, {0.3, 1.0}};
    CHECK_THROWS(fit_normal(extremes));
    const std::vector<CdfPoint> decreasing{{0.1, 0.6}, {0.2, 0.3}};
    CHECK_THROWS(fit_normal(decreasing));
  }
}

TEST_CASE("theorem 1 bounds") {
  const MarginDistribution mnist{0.887, 0.427};
  // mpmath: ncdf((0.3 - 0.887) / 0.427) and ncdf(-0.887 / 0.427)
  const auto b = theorem1_bounds(mnist, 0.3, 0.3);
  CHECK(std::abs(b.natural_error - 0.0846111097825446) < 1e-9);
  CHECK(std::abs(b.adversarial_error_bound - 0.0188877064081950) < 1e-9);
  const auto zero = theorem1_bounds(mnist, 0.0, 0.3);
  CHECK(zero.natural_error == normal_cdf(mnist, 0.0));
  CHECK(zero.adversarial_error_bound == normal_cdf(mnist, 0.3));
  CHECK(theorem1_bounds(mnist, 0.1, 0.1).adversarial_error_bound == normal_cdf(mnist, 0.0));
  CHECK_THROWS(theorem1_bounds(mnist, -0.1, 0.3));
  CHECK_THROWS(theorem1_bounds(mnist, 0.1, 0.0));
}
