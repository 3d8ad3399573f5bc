#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "travag/errors.hpp"
#include "travag/model_io.hpp"
#include "travag/network.hpp"

using namespace travag;
using travag::test::finite_difference_gradient;
using travag::test::rel_error;

namespace {

// A 1x1 identity layer with a chosen weight/bias.
Network scalar_net(double w, double b) {
  Network net = Network::init({{1, 1, Activation::kIdentity}}, 0);
  GradientVector delta;
  delta.range = net.all_layers();
  delta.values = {w - net.weights(0)[0], b - net.biases(0)[0]};
  net.apply_update(delta);
  return net;
}

}  // namespace

TEST_CASE("init_network is deterministic and Xavier-bounded") {
  const std::vector<LayerSpec> specs = {{4, 3, Activation::kRelu},
                                        {3, 2, Activation::kSigmoid}};
  const Network a = Network::init(specs, 7);
  const Network b = Network::init(specs, 7);
  CHECK(a == b);
  const Network c = Network::init(specs, 8);
  CHECK(a != c);

  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / (specs[l].in_dim + specs[l].out_dim));
    for (const double w : a.weights(l)) {
      CHECK(std::abs(w) <= bound);
    }
    for (const double bias : a.biases(l)) CHECK(bias == 0.0);
  }
}

TEST_CASE("parameter counting") {
  const Network net = Network::init({{2, 2, Activation::kIdentity}}, 1);
  CHECK(net.parameter_count() == 6);  // 4 weights + 2 biases
  const Network two = Network::init({{4, 3, Activation::kRelu}, {3, 2, Activation::kTanh}}, 1);
  CHECK(two.parameter_count() == (4 * 3 + 3) + (3 * 2 + 2));
  CHECK(two.parameter_count({0, 1}) == 15);
  CHECK(two.parameter_count({1, 2}) == 8);
}

TEST_CASE("init_network rejects dimension mismatches") {
  CHECK_THROWS_AS(Network::init({{4, 3, Activation::kRelu}, {4, 2, Activation::kRelu}}, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(Network::init({}, 1), std::invalid_argument);
  CHECK_THROWS_AS(Network::init({{0, 3, Activation::kRelu}}, 1), std::invalid_argument);
}

TEST_CASE("forward: identity, sigmoid at zero, relu clamp") {
  SUBCASE("identity weights pass input through") {
    Network net = Network::init({{2, 2, Activation::kIdentity}}, 3);
    GradientVector delta;
    delta.range = net.all_layers();
    delta.values = {1.0 - net.weights(0)[0], 0.0 - net.weights(0)[1],
                    0.0 - net.weights(0)[2], 1.0 - net.weights(0)[3], 0.0, 0.0};
    net.apply_update(delta);
    const std::vector<double> x = {0.25, -1.5};
    CHECK(net.forward(x).output() == x);
  }
  SUBCASE("sigmoid of zero weights is one half") {
    Network net = Network::init({{3, 2, Activation::kSigmoid}}, 3);
    GradientVector delta;
    delta.range = net.all_layers();
    delta.values.assign(net.parameter_count(), 0.0);
    for (std::size_t i = 0; i < 6; ++i) delta.values[i] = -net.weights(0)[i];
    net.apply_update(delta);
    const std::vector<double> x = {9.0, -2.0, 0.5};
    for (const double y : net.forward(x).output()) CHECK(y == 0.5);
  }
  SUBCASE("relu zeroes negatives under identity weights") {
    Network net = Network::init({{2, 2, Activation::kRelu}}, 3);
    GradientVector delta;
    delta.range = net.all_layers();
    delta.values = {1.0 - net.weights(0)[0], 0.0 - net.weights(0)[1],
                    0.0 - net.weights(0)[2], 1.0 - net.weights(0)[3], 0.0, 0.0};
    net.apply_update(delta);
    const std::vector<double> x = {-1.0, 2.0};
    const std::vector<double> expected = {0.0, 2.0};
    CHECK(net.forward(x).output() == expected);
  }
  SUBCASE("dimension mismatch throws") {
    const Network net = Network::init({{3, 1, Activation::kIdentity}}, 3);
    const std::vector<double> x = {1.0, 2.0};
    CHECK_THROWS_AS(net.forward(x), std::invalid_argument);
  }
  SUBCASE("non-finite input is rejected, not propagated") {
    const Network net = Network::init({{2, 2, Activation::kRelu}}, 3);
    const std::vector<double> x = {1.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(net.forward(x), NumericError);
  }
}

TEST_CASE("loss values") {
  const std::vector<double> half = {0.5};
  const std::vector<double> nine = {0.9};
  const std::vector<double> one = {1.0};
  CHECK(loss_value(LossKind::kBce, half, one) == doctest::Approx(0.6931471805599453));
  CHECK(loss_value(LossKind::kBce, nine, one) == doctest::Approx(0.105360515657826));
  const std::vector<double> o = {0.3, -0.7};
  CHECK(loss_value(LossKind::kMse, o, o) == 0.0);
  const std::vector<double> t = {0.5, -0.5};
  CHECK(loss_value(LossKind::kMse, o, t) == doctest::Approx((0.04 + 0.04) / 2.0));

  const std::vector<double> outside = {1.5};
  CHECK_THROWS_AS(loss_value(LossKind::kBce, outside, one), NumericError);
}

TEST_CASE("hand derivative: single linear neuron, mse") {
  // y = w x, x = 1, target = 0, w = 1: d/dw (wx - t)^2 = 2.
  const Network net = scalar_net(1.0, 0.0);
  const std::vector<double> x = {1.0};
  const std::vector<double> target = {0.0};
  const GradientVector g =
      per_example_gradient(net, x, target, LossKind::kMse, net.all_layers());
  REQUIRE(g.values.size() == 2);
  CHECK(g.values[0] == doctest::Approx(2.0));  // dL/dw
  CHECK(g.values[1] == doctest::Approx(2.0));  // dL/db = 2(y-t)
}

TEST_CASE("gradient vanishes at the mse optimum") {
  RngStream rng(99);
  const Network net = travag::test::random_network(rng, LossKind::kMse);
  std::vector<double> x(net.input_dim());
  for (double& v : x) v = rng.uniform() * 2.0 - 1.0;
  const std::vector<double> target = net.forward(x).output();
  const GradientVector g =
      per_example_gradient(net, x, target, LossKind::kMse, net.all_layers());
  for (const double v : g.values) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("per_example_gradient matches central finite differences") {
  RngStream rng(2024);
  for (int trial = 0; trial < 12; ++trial) {
    const LossKind loss = trial % 2 == 0 ? LossKind::kMse : LossKind::kBce;
    const Network net = travag::test::random_network(rng, loss);
    std::vector<double> x(net.input_dim());
    for (double& v : x) v = rng.uniform() * 2.0 - 1.0;
    std::vector<double> target(net.output_dim());
    for (double& v : target) {
      v = loss == LossKind::kBce ? (rng.uniform() < 0.5 ? 0.0 : 1.0)
                                 : rng.uniform() * 2.0 - 1.0;
    }
    const GradientVector g = per_example_gradient(net, x, target, loss, net.all_layers());
    const std::vector<double> fd =
        finite_difference_gradient(net, x, target, loss, net.all_layers());

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      num += (g.values[i] - fd[i]) * (g.values[i] - fd[i]);
      den += fd[i] * fd[i];
    }
    if (den < 1e-16) continue;  // flat relu region; nothing to compare against
    CHECK(std::sqrt(num / den) < 1e-4);
  }
}

TEST_CASE("gradient over a subset matches the slice of the full gradient") {
  const Network net =
      Network::init({{3, 4, Activation::kRelu}, {4, 3, Activation::kTanh},
                     {3, 2, Activation::kSigmoid}},
                    11);
  const std::vector<double> x = {0.2, -0.4, 0.9};
  const std::vector<double> target = {1.0, 0.0};
  const GradientVector full =
      per_example_gradient(net, x, target, LossKind::kBce, net.all_layers());
  for (const LayerRange range : {LayerRange{0, 1}, LayerRange{1, 3}, LayerRange{2, 3}}) {
    const GradientVector part = per_example_gradient(net, x, target, LossKind::kBce, range);
    const GradientVector sliced = slice_gradient(net, full, range);
    REQUIRE(part.values.size() == sliced.values.size());
    for (std::size_t i = 0; i < part.values.size(); ++i) {
      CHECK(part.values[i] == doctest::Approx(sliced.values[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("apply_update: identity, isolation, additivity") {
  const Network base = Network::init(
      {{3, 4, Activation::kRelu}, {4, 2, Activation::kSigmoid}}, 21);

  SUBCASE("zero delta leaves the network unchanged") {
    Network net = base;
    GradientVector zero;
    zero.range = net.all_layers();
    zero.values.assign(net.parameter_count(), 0.0);
    net.apply_update(zero);
    CHECK(net == base);
  }

  SUBCASE("updating one subset leaves the other bit-identical") {
    Network net = base;
    GradientVector delta;
    delta.range = {1, 2};
    delta.values.assign(net.parameter_count({1, 2}), 0.5);
    net.apply_update(delta);
    CHECK(std::vector(net.weights(0).begin(), net.weights(0).end()) ==
          std::vector(base.weights(0).begin(), base.weights(0).end()));
    CHECK(std::vector(net.biases(0).begin(), net.biases(0).end()) ==
          std::vector(base.biases(0).begin(), base.biases(0).end()));
    CHECK(std::vector(net.weights(1).begin(), net.weights(1).end()) !=
          std::vector(base.weights(1).begin(), base.weights(1).end()));
  }

  SUBCASE("sequential updates compose additively") {
    RngStream rng(3);
    GradientVector d1, d2;
    d1.range = d2.range = base.all_layers();
    d1.values.resize(base.parameter_count());
    d2.values.resize(base.parameter_count());
    for (double& v : d1.values) v = rng.uniform() - 0.5;
    for (double& v : d2.values) v = rng.uniform() - 0.5;

    Network seq = base;
    seq.apply_update(d1);
    seq.apply_update(d2);

    Network once = base;
    GradientVector sum = d1;
    sum.add(d2);
    once.apply_update(sum);

    for (std::size_t l = 0; l < base.layer_count(); ++l) {
      for (std::size_t i = 0; i < base.weights(l).size(); ++i) {
        CHECK(seq.weights(l)[i] == doctest::Approx(once.weights(l)[i]).epsilon(1e-15));
      }
    }
  }

  SUBCASE("layout mismatch throws") {
    Network net = base;
    GradientVector bad;
    bad.range = net.all_layers();
    bad.values.assign(3, 0.0);
    CHECK_THROWS_AS(net.apply_update(bad), std::invalid_argument);
  }
}

TEST_CASE("stack and slice round trip") {
  const Network a = Network::init({{3, 4, Activation::kRelu}}, 1);
  const Network b = Network::init({{4, 2, Activation::kSigmoid}}, 2);
  const Network stacked = Network::stack(a, b);
  CHECK(stacked.layer_count() == 2);
  CHECK(stacked.slice({0, 1}).weights(0)[0] == a.weights(0)[0]);
  CHECK(stacked.slice({1, 2}).specs() == b.specs());

  const Network c = Network::init({{5, 2, Activation::kRelu}}, 3);
  CHECK_THROWS_AS(Network::stack(a, c), std::invalid_argument);
}

TEST_CASE("model JSON round trip is exact") {
  RngStream rng(77);
  const Network net = travag::test::random_network(rng, LossKind::kMse);
  std::stringstream buffer;
  save_network(net, buffer);
  const Network back = load_network(buffer);
  CHECK(back == net);

  std::istringstream bad("{\"format_version\": 99}");
  CHECK_THROWS_AS(load_network(bad), FormatError);
  std::istringstream garbage("not json");
  CHECK_THROWS_AS(load_network(garbage), FormatError);
}
