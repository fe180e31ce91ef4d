#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "abstain/gradcheck.hpp"
#include "abstain/network.hpp"
#include "reference_net.hpp"
#include "test_support.hpp"

using namespace abstain;

namespace {

Network small_mlp(std::uint64_t seed = 7) { return Network(mlp_layers(2, {16}, 3), seed); }

}  // namespace

TEST_CASE("tensor validates its shape") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>(3)), std::invalid_argument);
  Tensor t(Shape{2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS(t.reshaped({4}));
  CHECK(linf_distance(t, Tensor(Shape{2, 3}, 1.0f)) == doctest::Approx(0.5));
}

TEST_CASE("build_network counts parameters") {
  CHECK(small_mlp().parameter_count() == 2 * 16 + 16 + 16 * 3 + 3);
  CHECK_THROWS_AS(Network({}, 1), ShapeError);

  const Network cnn(mnist_cnn_layers(10), 1, {1, 28, 28});
  CHECK(cnn.parameter_count() == 232170);
  CHECK(cnn.output_shape() == Shape{10});
}

TEST_CASE("incompatible layers are reported by pair") {
  try {
    Network({LayerSpec::dense(2, 4), LayerSpec::softplus(), LayerSpec::dense(5, 3)}, 1);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("layer 1 (softplus) -> layer 2 (dense)") != std::string::npos);
  }
  CHECK_THROWS_AS(Network({LayerSpec::conv2d(1, 2, 3)}, 1, {1, 2, 2}), ShapeError);
  CHECK_THROWS_AS(Network({LayerSpec::conv2d(3, 2, 3)}, 1, {1, 5, 5}), ShapeError);
}

TEST_CASE("initialization is seeded and fan-in scaled") {
  const Network a = small_mlp(11), b = small_mlp(11), c = small_mlp(12);
  CHECK(a.parameters() == b.parameters());
  CHECK_FALSE(a.parameters() == c.parameters());
  const float bound = 1.0f / std::sqrt(2.0f);
  for (float w : a.parameters()[0].values()) CHECK(std::abs(w) <= bound);
}

TEST_CASE("forward of a zero network is zero") {
  Network net = small_mlp();
  for (auto& p : net.parameters()) p.fill(0.0f);
  const Tensor z = net.forward(Tensor::vector({0.3f, -2.0f}));
  for (float v : z.values()) CHECK(v == 0.0f);
}

TEST_CASE("a single dense layer is affine") {
  Network net({LayerSpec::dense(2, 2)}, 3);
  net.parameters()[0] = Tensor({2, 2}, {1, 2, 3, 4});
  net.parameters()[1] = Tensor({2}, {0.5f, -1});
  const Tensor z = net.forward(Tensor::vector({1, -1}));
  CHECK(z[0] == doctest::Approx(-0.5));
  CHECK(z[1] == doctest::Approx(-2.0));
}

TEST_CASE("forward matches the straight-line reference") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 12; ++i) {
    const Network net = testsupport::random_small_network(rng, i);
    const Tensor x = testsupport::random_tensor(rng, net.input_shape());
    const Tensor z = net.forward(x);
    const auto ref = reftest::ref_forward(net.layers(), reftest::to_double(net.parameters()), net.input_shape(),
                                          reftest::to_double(x));
    REQUIRE(ref.size() == z.size());
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(z[k] == doctest::Approx(ref[k]).epsilon(1e-5));
  }
}

TEST_CASE("forward rejects bad shapes and reports non-finite layers") {
  Network net = small_mlp();
  CHECK_THROWS_AS(net.forward(Tensor::vector({1, 2, 3})), ShapeError);
  net.parameters()[0].fill(3e38f);
  try {
    net.forward(Tensor::vector({10, 10}));
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.layer() == 0);
  }
}

TEST_CASE("backward on simple networks") {
  SUBCASE("constant network has no input gradient") {
    Network net = small_mlp();
    net.parameters()[0].fill(0.0f);
    const auto g = net.backward(Tensor::vector({0.2f, 0.9f}), Tensor::vector({1, -2, 0.5f}));
    for (float v : g.input.values()) CHECK(v == 0.0f);
  }
  SUBCASE("linear network returns weight rows") {
    Network net({LayerSpec::dense(3, 2)}, 9);
    const auto g = net.backward(Tensor::vector({0.1f, 0.2f, 0.3f}), Tensor::vector({0, 1}));
    for (std::size_t j = 0; j < 3; ++j) CHECK(g.input[j] == net.parameters()[0][3 + j]);
  }
}

TEST_CASE("backward agrees with finite differences on random networks") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 15; ++i) {
    const Network net = testsupport::random_small_network(rng, i);
    const Tensor x = testsupport::random_tensor(rng, net.input_shape());
    const Tensor w = testsupport::random_tensor(rng, net.output_shape(), -1.0, 1.0);
    const auto check = testsupport::check_backward(net, x, w);
    if (check.min_pool_gap < 10 * testsupport::kFdStep) continue;
    INFO("instance " << i);
    CHECK(check.worst() < 1e-4);
  }
}

TEST_CASE("finite_difference_gradient") {
  const auto sq = [](const Tensor& x) {
    double s = 0;
    for (float v : x.values()) s += static_cast<double>(v) * v;
    return s;
  };
  const Tensor g = finite_difference_gradient(sq, Tensor::vector({1, 2}), 1e-3);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-4));
  const Tensor zero = finite_difference_gradient([](const Tensor&) { return 3.0; }, Tensor::vector({1, 2}), 1e-3);
  CHECK(zero[0] == 0.0f);
  CHECK_THROWS(finite_difference_gradient(sq, Tensor::vector({1}), 0.0));

  const std::vector<double> a{1.0, 0.0}, b{1.001, 1e-9};
  CHECK(max_relative_error(a, b, 1e-3) == doctest::Approx(0.001 / 1.001));
}

TEST_CASE("cross-entropy gradient matches finite differences") {
  const Network net = small_mlp(21);
  const Tensor x = Tensor::vector({0.3f, 0.8f});
  const std::size_t y = 1;
  const auto ce = [&](const std::vector<double>& z) {
    double m = *std::max_element(z.begin(), z.end()), s = 0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s) - z[y];
  };
  const auto params = reftest::to_double(net.parameters());
  const auto xd = reftest::to_double(x);
  // Output weights p - e_y give the cross-entropy gradient through backward.
  auto z = reftest::ref_forward(net.layers(), params, net.input_shape(), xd);
  double m = *std::max_element(z.begin(), z.end()), s = 0;
  for (double v : z) s += std::exp(v - m);
  Tensor w(Shape{3});
  for (std::size_t k = 0; k < 3; ++k) w[k] = static_cast<float>(std::exp(z[k] - m) / s - (k == y ? 1 : 0));
  const auto grads = net.backward(x, w);
  const auto fd = finite_difference_gradient(
      [&](std::span<const double> v) {
        return ce(reftest::ref_forward(net.layers(), params, net.input_shape(), {v.begin(), v.end()}));
      },
      xd, 1e-3);
  CHECK(max_relative_error(reftest::to_double(grads.input), fd, testsupport::kRelFloor) < 1e-4);
}

TEST_CASE("softplus gradients stay finite for extreme inputs") {
  Network net({LayerSpec::dense(1, 3), LayerSpec::softplus(), LayerSpec::dense(3, 2)}, 4);
  net.parameters()[0] = Tensor({3, 1}, {1e4f, -1e4f, 1.0f});
  for (float xv : {-1e3f, -50.0f, 0.0f, 50.0f, 1e3f}) {
    const auto g = net.backward(Tensor::vector({xv}), Tensor::vector({1, 1}));
    CHECK(g.input.all_finite());
    for (const auto& p : g.params) CHECK(p.all_finite());
  }
}

TEST_CASE("max-pool routes ties to the first maximum") {
  Network net({LayerSpec::maxpool(2, 2), LayerSpec::dense(1, 1)}, 1, {1, 2, 2});
  net.parameters()[0].fill(1.0f);
  const auto g = net.backward(Tensor({1, 2, 2}, {0.5f, 0.5f, 0.5f, 0.1f}), Tensor::vector({1}));
  CHECK(g.input[0] == 1.0f);
  CHECK(g.input[1] == 0.0f);
  CHECK(g.input[2] == 0.0f);
}

TEST_CASE("forward and backward are deterministic") {
  std::mt19937_64 rng(3);
  const Network a = testsupport::random_small_network(rng, 1);
  const Network b(a.layers(), a.seed(), a.input_shape());
  const Tensor x = testsupport::random_tensor(rng, a.input_shape());
  const Tensor w = testsupport::random_tensor(rng, a.output_shape());
  CHECK(a.forward(x) == b.forward(x));
  const auto ga = a.backward(x, w), gb = b.backward(x, w);
  CHECK(ga.params == gb.params);
  CHECK(ga.input == gb.input);
}

TEST_CASE("directional_backward differentiates a directional derivative") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 6; ++i) {
    const Network net = testsupport::random_small_network(rng, i);
    const Tensor x = testsupport::random_tensor(rng, net.input_shape());
    const Tensor d = testsupport::random_tensor(rng, net.input_shape(), -1.0, 1.0);
    const Tensor pw = testsupport::random_tensor(rng, net.output_shape(), -1.0, 1.0);
    const Tensor tw = testsupport::random_tensor(rng, net.output_shape(), -1.0, 1.0);
    reftest::RefStats stats;
    const auto xd = reftest::to_double(x), dd = reftest::to_double(d);
    const auto pwd = reftest::to_double(pw), twd = reftest::to_double(tw);
    reftest::ref_forward(net.layers(), reftest::to_double(net.parameters()), net.input_shape(), xd, &stats);
    if (stats.min_pool_gap < 1e-2) continue;

    // F(theta) = <pw, z(x)> + <tw, (z(x + h d) - z(x - h d)) / 2h>
    auto objective = [&](const std::vector<std::vector<double>>& p, double* tangent_part) {
      const double h = 1e-5;
      std::vector<double> up(xd), down(xd);
      for (std::size_t k = 0; k < xd.size(); ++k) {
        up[k] += h * dd[k];
        down[k] -= h * dd[k];
      }
      const auto z = reftest::ref_forward(net.layers(), p, net.input_shape(), xd);
      const auto zu = reftest::ref_forward(net.layers(), p, net.input_shape(), up);
      const auto zd = reftest::ref_forward(net.layers(), p, net.input_shape(), down);
      double prim = 0, tan = 0;
      for (std::size_t k = 0; k < z.size(); ++k) {
        prim += pwd[k] * z[k];
        tan += twd[k] * (zu[k] - zd[k]) / (2 * h);
      }
      if (tangent_part) *tangent_part = tan;
      return prim + tan;
    };

    double tangent_value = 0;
    const auto grads = net.directional_backward(net.trace(x), d, pw, tw, &tangent_value);
    const auto params = reftest::to_double(net.parameters());
    double ref_tangent = 0;
    objective(params, &ref_tangent);
    CHECK(tangent_value == doctest::Approx(ref_tangent).epsilon(1e-4));

    std::vector<double> analytic, numeric;
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto probe = params;
      const auto fd = finite_difference_gradient(
          [&](std::span<const double> v) {
            probe[t].assign(v.begin(), v.end());
            return objective(probe, nullptr);
          },
          params[t], 1e-3);
      numeric.insert(numeric.end(), fd.begin(), fd.end());
      analytic.insert(analytic.end(), grads[t].values().begin(), grads[t].values().end());
    }
    INFO("instance " << i);
    CHECK(max_relative_error(analytic, numeric, testsupport::kRelFloor) < 1e-3);
  }
}

TEST_CASE("network serialization round-trips bit-exactly") {
  std::mt19937_64 rng(8);
  const Network net = testsupport::random_small_network(rng, 1);
  const std::string text = serialize_network(net);
  const Network back = deserialize_network(text);
  CHECK(back.parameters() == net.parameters());
  CHECK(back.layers() == net.layers());
  CHECK(back.input_shape() == net.input_shape());
  CHECK(serialize_network(back) == text);

  std::string bumped = text;
  const auto pos = bumped.find("\"version\": 1");
  REQUIRE(pos != std::string::npos);
  bumped.replace(pos, 12, "\"version\": 2");
  CHECK_THROWS_AS(deserialize_network(bumped), FormatError);
  CHECK_THROWS_AS(deserialize_network("{not json"), FormatError);
  CHECK_THROWS_AS(deserialize_network("{\"format\": \"abstain-network\"}"), FormatError);
}
