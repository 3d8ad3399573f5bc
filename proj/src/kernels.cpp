#include "travag/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "travag/errors.hpp"
#include "travag/metrics.hpp"

namespace travag::kernels {

namespace {

std::atomic<int> g_threads{0};

int effective_threads() {
  const int n = g_threads.load(std::memory_order_relaxed);
#ifdef _OPENMP
  return n == 0 ? omp_get_max_threads() : n;
#else
  return n == 0 ? 1 : n;
#endif
}

void gradient_for_example(const Network& net, const TrainingExample& example, LossKind loss,
                          LayerRange subset, GradientVector& out, double* loss_out) {
  const ForwardCache cache = net.forward(example.input);
  if (loss_out != nullptr) {
    *loss_out = loss_value(loss, cache.output(), example.target);
  }
  out = per_example_gradient(net, cache, example.target, loss, subset);
}

// Chain rule through dis(dec(gen(z))) toward label 1; only the generator
// collects parameter gradients.
void generator_gradient_one(const Network& generator, const Network& decoder,
                            const Network& discriminator, std::span<const double> z,
                            GradientVector& out) {
  const ForwardCache gen_cache = generator.forward(z);
  const ForwardCache dec_cache = decoder.forward(gen_cache.output());
  const ForwardCache dis_cache = discriminator.forward(dec_cache.output());

  const std::vector<double>& y = dis_cache.output();
  std::vector<double> grad_into(y.size());
  std::vector<double> buffer;
  if (discriminator.specs().back().activation == Activation::kSigmoid) {
    // bce toward 1 fused with the sigmoid output: dL/dz = y - 1.
    const double n_out = static_cast<double>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) grad_into[i] = (y[i] - 1.0) / n_out;
    discriminator.backward_pre(dis_cache, grad_into, LayerRange{0, 0}, nullptr, &buffer);
  } else {
    const std::vector<double> ones(y.size(), 1.0);
    loss_gradient(LossKind::kBce, y, ones, grad_into);
    discriminator.backward(dis_cache, grad_into, LayerRange{0, 0}, nullptr, &buffer);
  }
  std::vector<double> latent_grad;
  decoder.backward(dec_cache, buffer, LayerRange{0, 0}, nullptr, &latent_grad);
  generator.backward(gen_cache, latent_grad, generator.all_layers(), &out, nullptr);
}

std::uint32_t decode_one(const Network& generator, const Network& decoder,
                         std::span<const double> z) {
  const ForwardCache latent = generator.forward(z);
  const ForwardCache decoded = decoder.forward(latent.output());
  const std::vector<double>& y = decoded.output();
  std::size_t best = 0;
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (y[i] > y[best]) best = i;
  }
  return static_cast<std::uint32_t>(best);
}

}  // namespace

void set_threads(int n) {
  if (n < 0) throw std::invalid_argument("thread count must be >= 0");
  g_threads.store(n, std::memory_order_relaxed);
}

int threads() { return effective_threads(); }

void batch_gradients_serial(const Network& net, std::span<const TrainingExample> batch,
                            LossKind loss, LayerRange subset,
                            std::span<GradientVector> out, std::span<double> losses) {
  if (out.size() != batch.size() || (!losses.empty() && losses.size() != batch.size())) {
    throw std::invalid_argument("batch_gradients: slot count mismatch");
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    gradient_for_example(net, batch[i], loss, subset, out[i],
                         losses.empty() ? nullptr : &losses[i]);
  }
}

void batch_gradients_parallel(const Network& net, std::span<const TrainingExample> batch,
                              LossKind loss, LayerRange subset,
                              std::span<GradientVector> out, std::span<double> losses) {
  if (out.size() != batch.size() || (!losses.empty() && losses.size() != batch.size())) {
    throw std::invalid_argument("batch_gradients: slot count mismatch");
  }
#ifdef _OPENMP
  std::exception_ptr error;
  const int nthreads = effective_threads();
#pragma omp parallel for schedule(static) num_threads(nthreads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(batch.size()); ++i) {
    try {
      gradient_for_example(net, batch[i], loss, subset, out[i],
                           losses.empty() ? nullptr : &losses[i]);
    } catch (...) {
#pragma omp critical(travag_batch_gradients_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
#else
  batch_gradients_serial(net, batch, loss, subset, out, losses);
#endif
}

void batch_gradients(const Network& net, std::span<const TrainingExample> batch, LossKind loss,
                     LayerRange subset, std::span<GradientVector> out, std::span<double> losses) {
  if (effective_threads() <= 1 || batch.size() < 2) {
    batch_gradients_serial(net, batch, loss, subset, out, losses);
  } else {
    batch_gradients_parallel(net, batch, loss, subset, out, losses);
  }
}

void generator_gradients_serial(const Network& generator, const Network& decoder,
                                const Network& discriminator, std::span<const double> noise,
                                std::size_t count, std::span<GradientVector> out) {
  const std::size_t dim = generator.input_dim();
  if (noise.size() != count * dim || out.size() != count) {
    throw std::invalid_argument("generator_gradients: buffer size mismatch");
  }
  for (std::size_t i = 0; i < count; ++i) {
    generator_gradient_one(generator, decoder, discriminator, noise.subspan(i * dim, dim),
                           out[i]);
  }
}

void generator_gradients_parallel(const Network& generator, const Network& decoder,
                                  const Network& discriminator, std::span<const double> noise,
                                  std::size_t count, std::span<GradientVector> out) {
  const std::size_t dim = generator.input_dim();
  if (noise.size() != count * dim || out.size() != count) {
    throw std::invalid_argument("generator_gradients: buffer size mismatch");
  }
#ifdef _OPENMP
  std::exception_ptr error;
  const int nthreads = effective_threads();
#pragma omp parallel for schedule(static) num_threads(nthreads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    try {
      generator_gradient_one(generator, decoder, discriminator, noise.subspan(i * dim, dim),
                             out[i]);
    } catch (...) {
#pragma omp critical(travag_generator_gradients_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
#else
  generator_gradients_serial(generator, decoder, discriminator, noise, count, out);
#endif
}

void generator_gradients(const Network& generator, const Network& decoder,
                         const Network& discriminator, std::span<const double> noise,
                         std::size_t count, std::span<GradientVector> out) {
  if (effective_threads() <= 1 || count < 2) {
    generator_gradients_serial(generator, decoder, discriminator, noise, count, out);
  } else {
    generator_gradients_parallel(generator, decoder, discriminator, noise, count, out);
  }
}

std::vector<int> pairwise_levenshtein_serial(std::span<const TraceVariant> a,
                                             std::span<const TraceVariant> b) {
  std::vector<int> costs(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      costs[i * b.size() + j] = levenshtein(a[i], b[j]);
    }
  }
  return costs;
}

std::vector<int> pairwise_levenshtein_parallel(std::span<const TraceVariant> a,
                                               std::span<const TraceVariant> b) {
  std::vector<int> costs(a.size() * b.size());
#ifdef _OPENMP
  const int nthreads = effective_threads();
#pragma omp parallel for schedule(static) num_threads(nthreads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(a.size()); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      costs[i * b.size() + j] = levenshtein(a[i], b[j]);
    }
  }
#else
  costs = pairwise_levenshtein_serial(a, b);
#endif
  return costs;
}

std::vector<int> pairwise_levenshtein(std::span<const TraceVariant> a,
                                      std::span<const TraceVariant> b) {
  if (effective_threads() <= 1 || a.size() * b.size() < 64) {
    return pairwise_levenshtein_serial(a, b);
  }
  return pairwise_levenshtein_parallel(a, b);
}

std::vector<std::uint32_t> generate_indices_serial(const Network& generator,
                                                   const Network& decoder,
                                                   std::span<const double> noise,
                                                   std::size_t count) {
  const std::size_t dim = generator.input_dim();
  if (noise.size() != count * dim) {
    throw std::invalid_argument("generate_indices: noise buffer size mismatch");
  }
  std::vector<std::uint32_t> indices(count);
  for (std::size_t i = 0; i < count; ++i) {
    indices[i] = decode_one(generator, decoder, noise.subspan(i * dim, dim));
  }
  return indices;
}

std::vector<std::uint32_t> generate_indices_parallel(const Network& generator,
                                                     const Network& decoder,
                                                     std::span<const double> noise,
                                                     std::size_t count) {
  const std::size_t dim = generator.input_dim();
  if (noise.size() != count * dim) {
    throw std::invalid_argument("generate_indices: noise buffer size mismatch");
  }
  std::vector<std::uint32_t> indices(count);
#ifdef _OPENMP
  std::exception_ptr error;
  const int nthreads = effective_threads();
#pragma omp parallel for schedule(static) num_threads(nthreads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    try {
      indices[i] = decode_one(generator, decoder, noise.subspan(i * dim, dim));
    } catch (...) {
#pragma omp critical(travag_generate_indices_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
#else
  indices = generate_indices_serial(generator, decoder, noise, count);
#endif
  return indices;
}

std::vector<std::uint32_t> generate_indices(const Network& generator, const Network& decoder,
                                            std::span<const double> noise, std::size_t count) {
  if (effective_threads() <= 1 || count < 2) {
    return generate_indices_serial(generator, decoder, noise, count);
  }
  return generate_indices_parallel(generator, decoder, noise, count);
}

}  // namespace travag::kernels
