#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "travag/eventlog.hpp"
#include "travag/network.hpp"

namespace travag::kernels {

/// One (input, target) pair. The target is a dense vector; scalar labels are
/// one-element vectors.
struct TrainingExample {
  std::vector<double> input;
  std::vector<double> target;
};

/// Worker-thread cap for the *_parallel kernels and the dispatchers below.
/// 0 (default) means the OpenMP runtime default; 1 forces the serial path.
void set_threads(int n);
int threads();

// Each kernel comes as a serial reference implementation and an OpenMP
// variant. The parallel variants distribute independent items across threads
// and write each result into its own slot, so both produce bit-identical
// output; the plain name dispatches on threads(). The serial versions stay
// around as the comparison baseline for tests and benchmarks.

/// Per-example loss gradients over `subset`, slot i for example i.
/// `losses` (optional, size = batch) receives each example's loss value.
void batch_gradients_serial(const Network& net, std::span<const TrainingExample> batch,
                            LossKind loss, LayerRange subset,
                            std::span<GradientVector> out, std::span<double> losses = {});
void batch_gradients_parallel(const Network& net, std::span<const TrainingExample> batch,
                              LossKind loss, LayerRange subset,
                              std::span<GradientVector> out, std::span<double> losses = {});
void batch_gradients(const Network& net, std::span<const TrainingExample> batch,
                     LossKind loss, LayerRange subset,
                     std::span<GradientVector> out, std::span<double> losses = {});

/// Row-major |a| x |b| Levenshtein distance matrix between variant lists.
std::vector<int> pairwise_levenshtein_serial(std::span<const TraceVariant> a,
                                             std::span<const TraceVariant> b);
std::vector<int> pairwise_levenshtein_parallel(std::span<const TraceVariant> a,
                                               std::span<const TraceVariant> b);
std::vector<int> pairwise_levenshtein(std::span<const TraceVariant> a,
                                      std::span<const TraceVariant> b);

/// Per-example generator gradients of the non-saturating loss
/// -log(dis(dec(gen(z)))): the chain backward runs through the frozen
/// discriminator and decoder, collecting parameter gradients only in the
/// generator. `noise` holds count x noise_dim values, row-major.
void generator_gradients_serial(const Network& generator, const Network& decoder,
                                const Network& discriminator, std::span<const double> noise,
                                std::size_t count, std::span<GradientVector> out);
void generator_gradients_parallel(const Network& generator, const Network& decoder,
                                  const Network& discriminator, std::span<const double> noise,
                                  std::size_t count, std::span<GradientVector> out);
void generator_gradients(const Network& generator, const Network& decoder,
                         const Network& discriminator, std::span<const double> noise,
                         std::size_t count, std::span<GradientVector> out);

/// Decodes `count` latent samples: argmax over decoder(generator(z_i)) for
/// each noise row z_i (ties resolve to the lowest index). `noise` holds
/// count x noise_dim values, row-major.
std::vector<std::uint32_t> generate_indices_serial(const Network& generator,
                                                   const Network& decoder,
                                                   std::span<const double> noise,
                                                   std::size_t count);
std::vector<std::uint32_t> generate_indices_parallel(const Network& generator,
                                                     const Network& decoder,
                                                     std::span<const double> noise,
                                                     std::size_t count);
std::vector<std::uint32_t> generate_indices(const Network& generator, const Network& decoder,
                                            std::span<const double> noise, std::size_t count);

}  // namespace travag::kernels
