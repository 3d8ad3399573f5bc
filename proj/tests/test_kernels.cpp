#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "travag/kernels.hpp"

using namespace travag;
using kernels::TrainingExample;

// The parallel kernels distribute independent slots over OpenMP threads;
// every result must be bit-identical to the serial reference.

namespace {

std::vector<TrainingExample> random_batch(const Network& net, RngStream& rng, std::size_t n,
                                          bool binary_targets) {
  std::vector<TrainingExample> batch(n);
  for (auto& e : batch) {
    e.input.resize(net.input_dim());
    for (double& v : e.input) v = rng.uniform() * 2.0 - 1.0;
    e.target.resize(net.output_dim());
    for (double& v : e.target) {
      v = binary_targets ? (rng.uniform() < 0.5 ? 0.0 : 1.0) : rng.uniform() * 2.0 - 1.0;
    }
  }
  return batch;
}

}  // namespace

TEST_CASE("batch_gradients: parallel output is bit-identical to serial") {
  RngStream rng(42);
  const Network net = Network::init(
      {{6, 16, Activation::kRelu}, {16, 8, Activation::kTanh}, {8, 4, Activation::kSigmoid}},
      3);
  const auto batch = random_batch(net, rng, 64, true);

  std::vector<GradientVector> serial(batch.size()), parallel(batch.size());
  std::vector<double> serial_losses(batch.size()), parallel_losses(batch.size());
  kernels::batch_gradients_serial(net, batch, LossKind::kBce, net.all_layers(), serial,
                                  serial_losses);
  kernels::batch_gradients_parallel(net, batch, LossKind::kBce, net.all_layers(), parallel,
                                    parallel_losses);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(serial[i].values == parallel[i].values);
    CHECK(serial_losses[i] == parallel_losses[i]);
  }
}

TEST_CASE("generator_gradients: parallel output is bit-identical to serial") {
  RngStream rng(43);
  const Network gen = Network::init(
      {{4, 8, Activation::kRelu}, {8, 3, Activation::kIdentity}}, 5);
  const Network dec = Network::init(
      {{3, 8, Activation::kRelu}, {8, 5, Activation::kSigmoid}}, 6);
  const Network dis = Network::init(
      {{5, 8, Activation::kRelu}, {8, 1, Activation::kSigmoid}}, 7);

  const std::size_t count = 48;
  std::vector<double> noise(count * gen.input_dim());
  for (double& v : noise) v = rng.normal();

  std::vector<GradientVector> serial(count), parallel(count);
  kernels::generator_gradients_serial(gen, dec, dis, noise, count, serial);
  kernels::generator_gradients_parallel(gen, dec, dis, noise, count, parallel);
  for (std::size_t i = 0; i < count; ++i) {
    CHECK(serial[i].values == parallel[i].values);
  }
}

TEST_CASE("pairwise_levenshtein: parallel output is bit-identical to serial") {
  RngStream rng(44);
  std::vector<TraceVariant> a, b;
  for (int i = 0; i < 40; ++i) a.push_back(travag::test::random_variant(rng, 8));
  for (int i = 0; i < 37; ++i) b.push_back(travag::test::random_variant(rng, 8));
  CHECK(kernels::pairwise_levenshtein_serial(a, b) ==
        kernels::pairwise_levenshtein_parallel(a, b));
}

TEST_CASE("generate_indices: parallel output is bit-identical to serial") {
  RngStream rng(45);
  const Network gen = Network::init(
      {{6, 12, Activation::kRelu}, {12, 4, Activation::kIdentity}}, 8);
  const Network dec = Network::init(
      {{4, 12, Activation::kRelu}, {12, 9, Activation::kSigmoid}}, 9);
  const std::size_t count = 256;
  std::vector<double> noise(count * gen.input_dim());
  for (double& v : noise) v = rng.normal();
  CHECK(kernels::generate_indices_serial(gen, dec, noise, count) ==
        kernels::generate_indices_parallel(gen, dec, noise, count));
}

TEST_CASE("thread cap dispatch") {
  kernels::set_threads(1);
  CHECK(kernels::threads() == 1);
  kernels::set_threads(0);
  CHECK(kernels::threads() >= 1);
  CHECK_THROWS_AS(kernels::set_threads(-2), std::invalid_argument);
}

TEST_CASE("parallel kernels propagate worker exceptions") {
  const Network net = Network::init({{2, 2, Activation::kRelu}}, 1);
  std::vector<TrainingExample> batch(8);
  for (auto& e : batch) {
    e.input = {0.5, 0.5};
    e.target = {0.0, 1.0};
  }
  batch[5].input = {std::numeric_limits<double>::quiet_NaN(), 0.0};
  std::vector<GradientVector> out(batch.size());
  CHECK_THROWS(kernels::batch_gradients_parallel(net, batch, LossKind::kMse,
                                                 net.all_layers(), out));
}
