#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "travag/kernels.hpp"
#include "travag/network.hpp"
#include "travag/rng.hpp"

namespace travag {

/// Settings of one DP-SGD mechanism (decoder or discriminator).
struct DpSgdConfig {
  double clip_norm = 1.0;         // C
  double noise_multiplier = 0.0;  // Phi; 0 disables the noise (non-private)
  double sampling_rate = 1.0;     // q, Poisson inclusion probability
  double learning_rate = 0.1;     // eta
  std::uint64_t iterations = 1;   // T
  std::size_t microbatch_size = 1;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

/// clip(g, C) = g * min(1, C / ||g||_2). Returns g unchanged (bitwise) when
/// its norm is already within C; otherwise rescales to norm exactly C.
/// Throws NumericError on non-finite input, std::invalid_argument on C <= 0.
GradientVector clip_gradient(GradientVector g, double clip_norm);

/// The noisy averaged batch gradient:
///   g_B = (1/|B|) * (sum_i clip(g_i, C) + xi),   xi ~ N(0, C^2 Phi^2 I).
/// Summation runs in index order; with Phi = 0 no draw is made and the
/// result equals the exact mean of the clipped gradients.
GradientVector noisy_batch_gradient(std::span<const GradientVector> per_example,
                                    double clip_norm, double noise_multiplier,
                                    RngStream& rng);

/// Poisson sampling: each index in [0, population) enters independently with
/// probability `rate`. The result may be empty; exactly `population` draws
/// are consumed either way.
std::vector<std::uint32_t> poisson_sample(std::size_t population, double rate, RngStream& rng);

/// Groups per-example gradients into consecutive microbatches of
/// `microbatch_size` (the last group may be smaller) and averages within
/// each group. Size 1 returns the input unchanged.
std::vector<GradientVector> microbatch_gradients(std::vector<GradientVector> per_example,
                                                 std::size_t microbatch_size);

/// One DP-SGD step on `subset`: per-example (or per-microbatch) gradients
/// over the batch, clipped, noised and averaged, then theta -= eta * g_B.
/// Parameters outside the subset are untouched.
void dp_sgd_step(Network& net, LayerRange subset,
                 std::span<const kernels::TrainingExample> batch, LossKind loss,
                 const DpSgdConfig& config, RngStream& rng);

/// Adam state for the non-private parameter subsets (encoder, generator).
/// The private path stays plain SGD so its privacy analysis is exactly the
/// noisy-gradient equation; non-private parameters carry no such constraint.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t parameter_count, double learning_rate,
                double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  /// Consumes a mean gradient, returns the parameter update (already
  /// negated, ready for Network::apply_update).
  GradientVector update(const GradientVector& gradient);

 private:
  double learning_rate_;
  double beta1_;
  double beta2_;
  double epsilon_;
  std::uint64_t step_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace travag
