#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "travag/dp_sgd.hpp"
#include "travag/errors.hpp"

using namespace travag;
using kernels::TrainingExample;

namespace {

GradientVector gv(std::initializer_list<double> values) {
  GradientVector g;
  g.range = {0, 1};
  g.values = values;
  return g;
}

}  // namespace

TEST_CASE("clip_gradient") {
  SUBCASE("inside the ball: returned unchanged") {
    const GradientVector g = gv({0.0, 4.0});  // norm 4
    const GradientVector c = clip_gradient(g, 5.0);
    CHECK(c.values == g.values);
  }
  SUBCASE("outside: rescaled to norm exactly C, direction kept") {
    const GradientVector c = clip_gradient(gv({3.0, 4.0}), 2.5);
    CHECK(c.values[0] == doctest::Approx(1.5));
    CHECK(c.values[1] == doctest::Approx(2.0));
    CHECK(c.l2_norm() == doctest::Approx(2.5));
  }
  SUBCASE("zero vector stays zero") {
    const GradientVector c = clip_gradient(gv({0.0, 0.0, 0.0}), 1.0);
    for (const double v : c.values) CHECK(v == 0.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(clip_gradient(gv({1.0}), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(clip_gradient(gv({std::numeric_limits<double>::infinity()}), 1.0),
                    NumericError);
  }
}

TEST_CASE("clip invariant over random vectors") {
  RngStream rng(31337);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t dim = 1 + static_cast<std::size_t>(rng.uniform() * 20);
    GradientVector g;
    g.range = {0, 1};
    g.values.resize(dim);
    for (double& v : g.values) v = (rng.uniform() - 0.5) * std::exp(rng.uniform() * 10.0);
    const double clip = std::exp((rng.uniform() - 0.5) * 8.0);
    const double before = g.l2_norm();
    const GradientVector c = clip_gradient(g, clip);
    CHECK(c.l2_norm() <= clip * (1.0 + 1e-15));
    if (before <= clip) {
      CHECK(c.values == g.values);  // bitwise identity
    } else if (before > 0.0) {
      // direction preserved: c is a positive multiple of g
      for (std::size_t k = 0; k < dim; ++k) {
        CHECK(c.values[k] * before == doctest::Approx(g.values[k] * clip).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("noisy_batch_gradient") {
  RngStream rng(5);
  SUBCASE("phi = 0 is the exact mean of clipped gradients") {
    const std::vector<GradientVector> batch = {gv({2.0, 0.0}), gv({0.0, 4.0}),
                                               gv({-2.0, -1.0})};
    const GradientVector mean = noisy_batch_gradient(batch, 100.0, 0.0, rng);
    CHECK(mean.values[0] == doctest::Approx(0.0));
    CHECK(mean.values[1] == doctest::Approx(1.0));
  }
  SUBCASE("single clipped example") {
    const std::vector<GradientVector> batch = {gv({3.0, 4.0})};
    const GradientVector out = noisy_batch_gradient(batch, 2.5, 0.0, rng);
    CHECK(out.values[0] == doctest::Approx(1.5));
    CHECK(out.values[1] == doctest::Approx(2.0));
  }
  SUBCASE("empty batch throws") {
    const std::vector<GradientVector> batch;
    CHECK_THROWS_AS(noisy_batch_gradient(batch, 1.0, 1.0, rng), std::invalid_argument);
  }
  SUBCASE("deterministic given the seed") {
    const std::vector<GradientVector> batch = {gv({1.0, 2.0, 3.0})};
    RngStream r1(42), r2(42);
    const GradientVector a = noisy_batch_gradient(batch, 1.0, 1.0, r1);
    const GradientVector b = noisy_batch_gradient(batch, 1.0, 1.0, r2);
    CHECK(a.values == b.values);
  }
}

TEST_CASE("noise statistics match N(0, C^2 Phi^2 I)") {
  // Phi=1, C=1, |B|=1: g_B - clip(g) is exactly the noise vector.
  const int trials = 100000;
  const GradientVector g = gv({0.25, -0.5, 0.75});
  const GradientVector clipped = clip_gradient(g, 1.0);
  RngStream rng(90210);
  std::vector<double> sum(3, 0.0), sum_sq(3, 0.0);
  const std::vector<GradientVector> batch = {g};
  for (int t = 0; t < trials; ++t) {
    const GradientVector out = noisy_batch_gradient(batch, 1.0, 1.0, rng);
    for (std::size_t k = 0; k < 3; ++k) {
      const double noise = out.values[k] - clipped.values[k];
      sum[k] += noise;
      sum_sq[k] += noise * noise;
    }
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const double mean = sum[k] / trials;
    const double stddev = std::sqrt(sum_sq[k] / trials - mean * mean);
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(trials)));
    CHECK(stddev == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("poisson_sample") {
  SUBCASE("q = 1 selects everything") {
    RngStream rng(1);
    for (int t = 0; t < 20; ++t) {
      const auto sel = poisson_sample(57, 1.0, rng);
      CHECK(sel.size() == 57);
    }
  }
  SUBCASE("q near zero selects almost nothing") {
    RngStream rng(2);
    std::size_t total = 0;
    for (int t = 0; t < 1000; ++t) total += poisson_sample(10, 1e-9, rng).size();
    CHECK(total == 0);
  }
  SUBCASE("binomial mean at q = 0.5") {
    RngStream rng(3);
    const std::size_t m = 10000;
    double sum = 0.0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) sum += static_cast<double>(poisson_sample(m, 0.5, rng).size());
    const double mean = sum / trials;
    const double sigma = std::sqrt(m * 0.5 * 0.5);
    CHECK(std::abs(mean - 5000.0) < 3.0 * sigma);
  }
  SUBCASE("invalid rate") {
    RngStream rng(4);
    CHECK_THROWS_AS(poisson_sample(5, 0.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(poisson_sample(5, 1.5, rng), std::invalid_argument);
  }
}

TEST_CASE("microbatch_gradients groups and averages") {
  std::vector<GradientVector> grads = {gv({1.0}), gv({3.0}), gv({5.0}), gv({9.0})};
  SUBCASE("size 1 is identity") {
    const auto out = microbatch_gradients(grads, 1);
    REQUIRE(out.size() == 4);
    CHECK(out[1].values[0] == 3.0);
  }
  SUBCASE("size 2 averages pairs") {
    const auto out = microbatch_gradients(grads, 2);
    REQUIRE(out.size() == 2);
    CHECK(out[0].values[0] == doctest::Approx(2.0));
    CHECK(out[1].values[0] == doctest::Approx(7.0));
  }
  SUBCASE("size = batch collapses to one group") {
    const auto out = microbatch_gradients(grads, 4);
    REQUIRE(out.size() == 1);
    CHECK(out[0].values[0] == doctest::Approx(4.5));
  }
  SUBCASE("ragged tail") {
    const auto out = microbatch_gradients(grads, 3);
    REQUIRE(out.size() == 2);
    CHECK(out[0].values[0] == doctest::Approx(3.0));
    CHECK(out[1].values[0] == doctest::Approx(9.0));
  }
}

namespace {

std::vector<TrainingExample> make_examples(const Network& net, RngStream& rng, std::size_t n) {
  std::vector<TrainingExample> batch(n);
  for (auto& e : batch) {
    e.input.resize(net.input_dim());
    for (double& v : e.input) v = rng.uniform() * 2.0 - 1.0;
    e.target.resize(net.output_dim());
    for (double& v : e.target) v = rng.uniform() * 2.0 - 1.0;
  }
  return batch;
}

// Plain full-batch gradient descent, the non-private reference.
void plain_gd_step(Network& net, std::span<const TrainingExample> batch, LossKind loss,
                   double learning_rate) {
  std::vector<GradientVector> grads(batch.size());
  kernels::batch_gradients_serial(net, batch, loss, net.all_layers(), grads);
  GradientVector mean = grads.front();
  for (std::size_t i = 1; i < grads.size(); ++i) mean.add(grads[i]);
  mean.scale(1.0 / static_cast<double>(grads.size()));
  mean.scale(-learning_rate);
  net.apply_update(mean);
}

}  // namespace

TEST_CASE("dp_sgd_step with phi=0 and huge clip equals plain gradient descent") {
  RngStream rng(808);
  Network dp_net = Network::init({{4, 5, Activation::kTanh}, {5, 2, Activation::kIdentity}}, 99);
  Network gd_net = dp_net;
  const std::vector<TrainingExample> batch = make_examples(dp_net, rng, 12);

  DpSgdConfig config;
  config.clip_norm = 1e9;
  config.noise_multiplier = 0.0;
  config.sampling_rate = 1.0;
  config.learning_rate = 0.05;
  config.iterations = 1;

  RngStream noise_rng(7);
  for (int step = 0; step < 25; ++step) {
    dp_sgd_step(dp_net, dp_net.all_layers(), batch, LossKind::kMse, config, noise_rng);
    plain_gd_step(gd_net, batch, LossKind::kMse, config.learning_rate);
    for (std::size_t l = 0; l < dp_net.layer_count(); ++l) {
      for (std::size_t i = 0; i < dp_net.weights(l).size(); ++i) {
        CHECK(dp_net.weights(l)[i] == doctest::Approx(gd_net.weights(l)[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("dp_sgd_step leaves parameters outside the subset untouched") {
  RngStream rng(11);
  Network net = Network::init({{3, 4, Activation::kRelu}, {4, 2, Activation::kSigmoid}}, 5);
  const Network before = net;
  std::vector<TrainingExample> batch = make_examples(net, rng, 6);
  for (auto& e : batch) {
    for (double& v : e.target) v = v < 0 ? 0.0 : 1.0;  // valid bce labels
  }

  DpSgdConfig config;
  config.clip_norm = 1.0;
  config.noise_multiplier = 0.7;
  config.learning_rate = 0.1;
  RngStream noise_rng(13);
  dp_sgd_step(net, {1, 2}, batch, LossKind::kBce, config, noise_rng);

  CHECK(std::vector(net.weights(0).begin(), net.weights(0).end()) ==
        std::vector(before.weights(0).begin(), before.weights(0).end()));
  CHECK(std::vector(net.weights(1).begin(), net.weights(1).end()) !=
        std::vector(before.weights(1).begin(), before.weights(1).end()));
}

TEST_CASE("dp_sgd_step reproducibility and degenerate cases") {
  RngStream rng(21);
  const Network base =
      Network::init({{3, 3, Activation::kTanh}, {3, 1, Activation::kSigmoid}}, 17);
  std::vector<TrainingExample> batch = make_examples(base, rng, 5);
  for (auto& e : batch) e.target = {1.0};

  DpSgdConfig config;
  config.clip_norm = 0.5;
  config.noise_multiplier = 1.3;
  config.learning_rate = 0.2;

  SUBCASE("identical seeds, identical trajectories") {
    Network a = base, b = base;
    RngStream ra(1000), rb(1000);
    for (int i = 0; i < 5; ++i) {
      dp_sgd_step(a, a.all_layers(), batch, LossKind::kBce, config, ra);
      dp_sgd_step(b, b.all_layers(), batch, LossKind::kBce, config, rb);
    }
    CHECK(a == b);
  }

  SUBCASE("empty batch is rejected") {
    Network net = base;
    RngStream r(0);
    const std::vector<TrainingExample> empty;
    CHECK_THROWS_AS(dp_sgd_step(net, net.all_layers(), empty, LossKind::kBce, config, r),
                    std::invalid_argument);
  }

  SUBCASE("zero learning rate leaves the network unchanged") {
    Network net = base;
    DpSgdConfig frozen = config;
    frozen.learning_rate = 0.0;
    frozen.noise_multiplier = 0.0;
    RngStream r(0);
    dp_sgd_step(net, net.all_layers(), batch, LossKind::kBce, frozen, r);
    CHECK(net == base);
  }

  SUBCASE("microbatch = batch means one clipped contribution") {
    // With the whole batch as a single microbatch and a tiny clip norm, the
    // update direction is the clipped mean gradient regardless of scale.
    Network net = base;
    DpSgdConfig grouped = config;
    grouped.noise_multiplier = 0.0;
    grouped.microbatch_size = batch.size();
    grouped.clip_norm = 1e-3;
    RngStream r(0);
    dp_sgd_step(net, net.all_layers(), batch, LossKind::kBce, grouped, r);

    // Reference: mean gradient clipped once.
    std::vector<GradientVector> grads(batch.size());
    kernels::batch_gradients_serial(base, batch, LossKind::kBce, base.all_layers(), grads);
    GradientVector mean = grads.front();
    for (std::size_t i = 1; i < grads.size(); ++i) mean.add(grads[i]);
    mean.scale(1.0 / static_cast<double>(batch.size()));
    GradientVector expected = clip_gradient(mean, grouped.clip_norm);
    expected.scale(-grouped.learning_rate);

    std::size_t offset = 0;
    for (std::size_t l = 0; l < base.layer_count(); ++l) {
      for (std::size_t i = 0; i < base.weights(l).size(); ++i) {
        CHECK(net.weights(l)[i] ==
              doctest::Approx(base.weights(l)[i] + expected.values[offset++]).epsilon(1e-12));
      }
      for (std::size_t i = 0; i < base.biases(l).size(); ++i) {
        CHECK(net.biases(l)[i] ==
              doctest::Approx(base.biases(l)[i] + expected.values[offset++]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("DpSgdConfig validation") {
  DpSgdConfig config;
  config.validate();
  DpSgdConfig bad = config;
  bad.clip_norm = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = config;
  bad.sampling_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = config;
  bad.iterations = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = config;
  bad.microbatch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
