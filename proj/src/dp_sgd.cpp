#include "travag/dp_sgd.hpp"

#include <cmath>
#include <stdexcept>

#include "travag/errors.hpp"

namespace travag {

void DpSgdConfig::validate() const {
  if (!(clip_norm > 0.0) || !std::isfinite(clip_norm)) {
    throw std::invalid_argument("clip_norm must be positive and finite");
  }
  if (!(noise_multiplier >= 0.0) || !std::isfinite(noise_multiplier)) {
    throw std::invalid_argument("noise_multiplier must be >= 0 and finite");
  }
  if (!(sampling_rate > 0.0 && sampling_rate <= 1.0)) {
    throw std::invalid_argument("sampling_rate must lie in (0, 1]");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be >= 0 and finite");
  }
  if (iterations == 0) {
    throw std::invalid_argument("iterations must be >= 1");
  }
  if (microbatch_size == 0) {
    throw std::invalid_argument("microbatch_size must be >= 1");
  }
}

GradientVector clip_gradient(GradientVector g, double clip_norm) {
  if (!(clip_norm > 0.0)) {
    throw std::invalid_argument("clip norm must be positive");
  }
  double sum = 0.0;
  for (const double v : g.values) {
    if (!std::isfinite(v)) throw NumericError("clip_gradient: non-finite gradient");
    sum += v * v;
  }
  const double norm = std::sqrt(sum);
  if (norm > clip_norm) {
    g.scale(clip_norm / norm);
  }
  return g;
}

GradientVector noisy_batch_gradient(std::span<const GradientVector> per_example,
                                    double clip_norm, double noise_multiplier,
                                    RngStream& rng) {
  if (per_example.empty()) {
    throw std::invalid_argument("noisy_batch_gradient: empty batch");
  }
  GradientVector sum = clip_gradient(per_example.front(), clip_norm);
  for (std::size_t i = 1; i < per_example.size(); ++i) {
    sum.add(clip_gradient(per_example[i], clip_norm));
  }
  if (noise_multiplier > 0.0) {
    const double stddev = clip_norm * noise_multiplier;
    for (double& v : sum.values) v += rng.normal(0.0, stddev);
  }
  sum.scale(1.0 / static_cast<double>(per_example.size()));
  return sum;
}

std::vector<std::uint32_t> poisson_sample(std::size_t population, double rate, RngStream& rng) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw std::invalid_argument("sampling rate must lie in (0, 1]");
  }
  std::vector<std::uint32_t> selected;
  for (std::size_t i = 0; i < population; ++i) {
    if (rng.bernoulli(rate)) selected.push_back(static_cast<std::uint32_t>(i));
  }
  return selected;
}

std::vector<GradientVector> microbatch_gradients(std::vector<GradientVector> per_example,
                                                 std::size_t microbatch_size) {
  if (microbatch_size == 0) {
    throw std::invalid_argument("microbatch_size must be >= 1");
  }
  if (microbatch_size <= 1 || per_example.empty()) return per_example;

  std::vector<GradientVector> groups;
  groups.reserve((per_example.size() + microbatch_size - 1) / microbatch_size);
  for (std::size_t start = 0; start < per_example.size(); start += microbatch_size) {
    const std::size_t end = std::min(start + microbatch_size, per_example.size());
    GradientVector group = std::move(per_example[start]);
    for (std::size_t i = start + 1; i < end; ++i) group.add(per_example[i]);
    group.scale(1.0 / static_cast<double>(end - start));
    groups.push_back(std::move(group));
  }
  return groups;
}

void dp_sgd_step(Network& net, LayerRange subset,
                 std::span<const kernels::TrainingExample> batch, LossKind loss,
                 const DpSgdConfig& config, RngStream& rng) {
  config.validate();
  if (batch.empty()) {
    throw std::invalid_argument("dp_sgd_step: empty batch");
  }
  std::vector<GradientVector> grads(batch.size());
  kernels::batch_gradients(net, batch, loss, subset, grads);
  grads = microbatch_gradients(std::move(grads), config.microbatch_size);

  GradientVector update = noisy_batch_gradient(grads, config.clip_norm,
                                               config.noise_multiplier, rng);
  update.scale(-config.learning_rate);
  net.apply_update(update);
}

AdamOptimizer::AdamOptimizer(std::size_t parameter_count, double learning_rate,
                             double beta1, double beta2, double epsilon)
    : learning_rate_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon),
      m_(parameter_count, 0.0),
      v_(parameter_count, 0.0) {}

GradientVector AdamOptimizer::update(const GradientVector& gradient) {
  if (gradient.values.size() != m_.size()) {
    throw std::invalid_argument("adam: gradient size mismatch");
  }
  ++step_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  GradientVector delta;
  delta.range = gradient.range;
  delta.values.resize(gradient.values.size());
  for (std::size_t i = 0; i < gradient.values.size(); ++i) {
    const double g = gradient.values[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double m_hat = m_[i] / bias1;
    const double v_hat = v_[i] / bias2;
    delta.values[i] = -learning_rate_ * m_hat / (std::sqrt(v_hat) + epsilon_);
  }
  return delta;
}

}  // namespace travag
