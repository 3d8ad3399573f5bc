#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "travag/accountant.hpp"
#include "travag/dp_sgd.hpp"
#include "travag/eventlog.hpp"
#include "travag/network.hpp"
#include "travag/rng.hpp"

namespace travag {

/// (epsilon, delta) budget for a whole run plus the ratio granted to the
/// autoencoder mechanism (the discriminator receives the rest; delta is
/// always split evenly). With `calibrate` unset the configured noise
/// multipliers are kept and merely verified against the target — the
/// grid-search path, where phi is part of the searched settings.
struct PrivacyTarget {
  double epsilon = 1.0;
  double delta = 1e-5;
  double split_ratio = 0.5;
  bool calibrate = true;
};

/// Full run configuration. When `target` is set, the noise multipliers in
/// the two DpSgdConfigs are ignored and calibrated from the split budget;
/// without a target the literal multipliers apply (0 = non-private).
struct TravagConfig {
  std::size_t latent_dim = 0;  // d; 0 = min(32, n)
  std::size_t noise_dim = 16;  // m_z
  std::size_t hidden_dim = 128;
  DpSgdConfig autoencoder;
  DpSgdConfig discriminator;
  double encoder_learning_rate = 1e-3;
  double generator_learning_rate = 1e-3;
  std::optional<PrivacyTarget> target;
  std::uint64_t generation_count = 0;  // 0 = one sample per original case
  std::uint64_t master_seed = 0;

  /// Effective latent dimension for an n-column feature space.
  std::size_t effective_latent_dim(std::size_t n) const;
  /// Throws std::invalid_argument / ConfigError on invalid combinations.
  void validate() const;
};

/// Everything a finished training run produces.
struct TrainedBundle {
  Network encoder;
  Network decoder;
  Network generator;
  Network discriminator;
  VariantVocabulary vocabulary;
  std::uint64_t training_cases = 0;

  MechanismSpend autoencoder_spend;
  MechanismSpend discriminator_spend;
  double autoencoder_clip_norm = 0.0;
  double discriminator_clip_norm = 0.0;

  std::optional<PrivacyTarget> target;
  std::optional<DpGuarantee> autoencoder_guarantee;
  std::optional<DpGuarantee> discriminator_guarantee;
  std::optional<DpGuarantee> combined_guarantee;

  /// Dimension chaining checks (decoder out == n == discriminator in, ...).
  void validate() const;
};

struct GenerationReport {
  SimpleEventLog synthetic;
  std::uint64_t samples = 0;
  std::optional<DpGuarantee> guarantee;  // copied from the bundle
};

struct AutoencoderResult {
  Network encoder;
  Network decoder;
  MechanismSpend spend;
};

struct GanResult {
  Network generator;
  Network discriminator;
  MechanismSpend spend;
};

/// Trains the autoencoder on one-hot rows. The decoder updates privately
/// (clip + noise per the DP-SGD equation); the encoder takes clean mean
/// gradients from the same backward pass via Adam. Throws DivergenceError
/// when the loss goes non-finite.
AutoencoderResult train_autoencoder(const BinaryMatrix& matrix, const TravagConfig& config,
                                    RngStream& rng);

/// Trains the GAN against a frozen decoder. Discriminator: real rows
/// (label 1) privately, generator fakes dec(gen(z)) (label 0) with clean
/// gradients; generator: non-saturating loss through the frozen decoder and
/// discriminator, Adam.
GanResult train_gan(const BinaryMatrix& matrix, const Network& decoder,
                    const TravagConfig& config, RngStream& rng);

/// Draws `count` Gaussian noise vectors, decodes argmax(dec(gen(z))) per
/// sample and assembles the synthetic log. Trained models are
/// post-processing: no privacy cost accrues here.
GenerationReport generate(const TrainedBundle& bundle, std::uint64_t count, std::uint64_t seed);

struct RunResult {
  GenerationReport report;
  TrainedBundle bundle;
};

/// The full workflow: vocabulary, encoding, per-mechanism noise calibration
/// (when a target is set), both training phases, accounting, generation.
RunResult run_travag(const SimpleEventLog& log, const TravagConfig& config);

/// Grid axes for the hyperparameter search.
struct GridSpec {
  std::vector<double> sampling_rates;
  std::vector<std::uint64_t> iterations;
  std::vector<double> noise_multipliers;
  int trials = 5;
};

struct GridPointScore {
  double sampling_rate = 0.0;
  std::uint64_t iterations = 0;
  double noise_multiplier = 0.0;
  double combined_epsilon = 0.0;
  bool admissible = false;
  double mean_similarity = 0.0;
  double mean_abs_difference = 0.0;
};

struct GridSearchResult {
  TravagConfig best;
  std::vector<GridPointScore> scores;
};

/// Evaluates every (q, T, Phi) grid point: verifies the privacy target via
/// the accountant first, trains each admissible point `trials` times and
/// scores mean relative log similarity against the original (ties: lower
/// absolute difference, then lower Phi). Throws CalibrationError listing
/// per-point epsilons when nothing is admissible.
GridSearchResult grid_search(const SimpleEventLog& log, const TravagConfig& base,
                             const GridSpec& grid, const PrivacyTarget& target);

/// Bundle directory layout: encoder.json, decoder.json, generator.json,
/// discriminator.json, vocabulary.tsv, ledger.json.
void save_bundle(const TrainedBundle& bundle, const std::filesystem::path& dir);
TrainedBundle load_bundle(const std::filesystem::path& dir);

}  // namespace travag
