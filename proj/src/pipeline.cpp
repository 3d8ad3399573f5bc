#include "travag/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "travag/errors.hpp"
#include "travag/kernels.hpp"
#include "travag/metrics.hpp"
#include "travag/model_io.hpp"

namespace travag {
namespace {

// Stream ids for deriving phase-local randomness from the master seed.
constexpr std::uint64_t kStreamEncoderInit = 0x01;
constexpr std::uint64_t kStreamDecoderInit = 0x02;
constexpr std::uint64_t kStreamGeneratorInit = 0x03;
constexpr std::uint64_t kStreamDiscriminatorInit = 0x04;
constexpr std::uint64_t kStreamAutoencoderPhase = 0x10;
constexpr std::uint64_t kStreamGanPhase = 0x11;
constexpr std::uint64_t kStreamGeneration = 0x12;
constexpr std::uint64_t kStreamGridPoint = 0x20;

std::vector<kernels::TrainingExample> dense_batch(const BinaryMatrix& matrix,
                                                  std::span<const std::uint32_t> rows,
                                                  bool target_is_input) {
  std::vector<kernels::TrainingExample> batch(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    batch[i].input.resize(matrix.cols());
    matrix.dense_row(rows[i], batch[i].input);
    if (target_is_input) batch[i].target = batch[i].input;
  }
  return batch;
}

GradientVector mean_gradient(std::span<const GradientVector> grads) {
  GradientVector mean = grads.front();
  for (std::size_t i = 1; i < grads.size(); ++i) mean.add(grads[i]);
  mean.scale(1.0 / static_cast<double>(grads.size()));
  return mean;
}

double mean_of(std::span<const double> values) {
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

}  // namespace

std::size_t TravagConfig::effective_latent_dim(std::size_t n) const {
  if (latent_dim == 0) return std::min<std::size_t>(32, n);
  if (latent_dim > n) {
    throw std::invalid_argument("latent_dim " + std::to_string(latent_dim) +
                                " exceeds the variant count " + std::to_string(n));
  }
  return latent_dim;
}

void TravagConfig::validate() const {
  autoencoder.validate();
  discriminator.validate();
  if (noise_dim == 0) throw std::invalid_argument("noise_dim must be >= 1");
  if (hidden_dim == 0) throw std::invalid_argument("hidden_dim must be >= 1");
  if (!(encoder_learning_rate > 0.0) || !(generator_learning_rate > 0.0)) {
    throw std::invalid_argument("non-private learning rates must be positive");
  }
  if (target) {
    if (!(target->epsilon > 0.0)) {
      throw std::invalid_argument("target epsilon must be positive");
    }
    if (!(target->delta > 0.0 && target->delta < 1.0)) {
      throw std::invalid_argument("target delta must lie in (0, 1)");
    }
    if (!(target->split_ratio > 0.0 && target->split_ratio < 1.0)) {
      throw std::invalid_argument("budget split ratio must lie in (0, 1)");
    }
  }
}

void TrainedBundle::validate() const {
  const std::size_t n = vocabulary.size();
  if (decoder.output_dim() != n || discriminator.input_dim() != n ||
      encoder.input_dim() != n) {
    throw std::invalid_argument("bundle dimensions do not match the vocabulary");
  }
  if (generator.output_dim() != decoder.input_dim() ||
      encoder.output_dim() != decoder.input_dim()) {
    throw std::invalid_argument("latent dimensions do not chain in the bundle");
  }
}

AutoencoderResult train_autoencoder(const BinaryMatrix& matrix, const TravagConfig& config,
                                    RngStream& rng) {
  config.autoencoder.validate();
  if (matrix.rows() < 2) {
    throw std::invalid_argument("autoencoder training needs at least two cases");
  }
  const std::size_t n = matrix.cols();
  const std::size_t d = config.effective_latent_dim(n);
  const std::size_t h = config.hidden_dim;

  Network encoder = Network::init({{n, h, Activation::kRelu}, {h, d, Activation::kRelu}},
                                  rng.derive_seed(kStreamEncoderInit));
  Network decoder = Network::init({{d, h, Activation::kRelu}, {h, n, Activation::kSigmoid}},
                                  rng.derive_seed(kStreamDecoderInit));
  Network stacked = Network::stack(encoder, decoder);
  const LayerRange encoder_range{0, encoder.layer_count()};
  const LayerRange decoder_range{encoder.layer_count(), stacked.layer_count()};

  const DpSgdConfig& dp = config.autoencoder;
  AdamOptimizer encoder_adam(stacked.parameter_count(encoder_range),
                             config.encoder_learning_rate);

  for (std::uint64_t iter = 0; iter < dp.iterations; ++iter) {
    // Empty batches still count as an iteration: the accountant charges
    // sampling rounds, not non-empty rounds.
    const std::vector<std::uint32_t> rows = poisson_sample(matrix.rows(), dp.sampling_rate, rng);
    if (rows.empty()) continue;

    const std::vector<kernels::TrainingExample> batch = dense_batch(matrix, rows, true);
    std::vector<GradientVector> grads(batch.size());
    std::vector<double> losses(batch.size());
    try {
      kernels::batch_gradients(stacked, batch, LossKind::kBce, stacked.all_layers(), grads,
                               losses);
    } catch (const NumericError& e) {
      throw DivergenceError("autoencoder diverged at iteration " + std::to_string(iter) + ": " +
                            e.what());
    }
    const double loss = mean_of(losses);
    if (!std::isfinite(loss)) {
      throw DivergenceError("autoencoder loss non-finite at iteration " + std::to_string(iter));
    }

    // Decoder: private. Encoder: clean mean gradient from the same backward
    // pass, noise touches only the decoder slice.
    std::vector<GradientVector> decoder_grads;
    decoder_grads.reserve(grads.size());
    std::vector<GradientVector> encoder_grads;
    encoder_grads.reserve(grads.size());
    for (const GradientVector& g : grads) {
      decoder_grads.push_back(slice_gradient(stacked, g, decoder_range));
      encoder_grads.push_back(slice_gradient(stacked, g, encoder_range));
    }
    decoder_grads = microbatch_gradients(std::move(decoder_grads), dp.microbatch_size);
    GradientVector decoder_update =
        noisy_batch_gradient(decoder_grads, dp.clip_norm, dp.noise_multiplier, rng);
    decoder_update.scale(-dp.learning_rate);
    stacked.apply_update(decoder_update);

    stacked.apply_update(encoder_adam.update(mean_gradient(encoder_grads)));
  }

  return AutoencoderResult{
      stacked.slice(encoder_range), stacked.slice(decoder_range),
      MechanismSpend{dp.sampling_rate, dp.noise_multiplier, dp.iterations}};
}

GanResult train_gan(const BinaryMatrix& matrix, const Network& decoder,
                    const TravagConfig& config, RngStream& rng) {
  config.discriminator.validate();
  if (matrix.cols() != decoder.output_dim()) {
    throw std::invalid_argument("decoder output does not match the feature space");
  }
  const std::size_t n = matrix.cols();
  const std::size_t d = decoder.input_dim();
  const std::size_t h = config.hidden_dim;
  const std::size_t noise_dim = config.noise_dim;

  Network generator = Network::init({{noise_dim, 64, Activation::kRelu},
                                     {64, 64, Activation::kRelu},
                                     {64, d, Activation::kIdentity}},
                                    rng.derive_seed(kStreamGeneratorInit));
  Network discriminator = Network::init({{n, h, Activation::kRelu},
                                         {h, 64, Activation::kRelu},
                                         {64, 1, Activation::kSigmoid}},
                                        rng.derive_seed(kStreamDiscriminatorInit));

  const DpSgdConfig& dp = config.discriminator;
  AdamOptimizer generator_adam(generator.parameter_count(), config.generator_learning_rate);

  std::vector<double> noise;
  for (std::uint64_t iter = 0; iter < dp.iterations; ++iter) {
    const std::vector<std::uint32_t> rows = poisson_sample(matrix.rows(), dp.sampling_rate, rng);
    if (rows.empty()) continue;  // counted toward T all the same
    const std::size_t batch_size = rows.size();

    try {
      // Discriminator step: real rows labeled 1, decoded fakes labeled 0.
      std::vector<kernels::TrainingExample> reals = dense_batch(matrix, rows, false);
      for (auto& e : reals) e.target = {1.0};

      noise.resize(batch_size * noise_dim);
      for (double& v : noise) v = rng.normal();
      std::vector<kernels::TrainingExample> fakes(batch_size);
      for (std::size_t i = 0; i < batch_size; ++i) {
        const ForwardCache latent =
            generator.forward(std::span(noise).subspan(i * noise_dim, noise_dim));
        fakes[i].input = decoder.forward(latent.output()).output();
        fakes[i].target = {0.0};
      }

      std::vector<GradientVector> real_grads(batch_size);
      std::vector<GradientVector> fake_grads(batch_size);
      kernels::batch_gradients(discriminator, reals, LossKind::kBce,
                               discriminator.all_layers(), real_grads);
      kernels::batch_gradients(discriminator, fakes, LossKind::kBce,
                               discriminator.all_layers(), fake_grads);

      // Only the real-example gradients carry training data, so only they
      // are clipped and noised; the generator's fakes enter clean.
      std::vector<GradientVector> real_micro =
          microbatch_gradients(std::move(real_grads), dp.microbatch_size);
      GradientVector update =
          noisy_batch_gradient(real_micro, dp.clip_norm, dp.noise_multiplier, rng);
      update.add(mean_gradient(fake_grads));
      update.scale(-dp.learning_rate);
      discriminator.apply_update(update);

      // Generator step: non-saturating ascent on log dis(dec(gen(z))).
      noise.resize(batch_size * noise_dim);
      for (double& v : noise) v = rng.normal();
      std::vector<GradientVector> gen_grads(batch_size);
      kernels::generator_gradients(generator, decoder, discriminator, noise, batch_size,
                                   gen_grads);
      generator.apply_update(generator_adam.update(mean_gradient(gen_grads)));
    } catch (const NumericError& e) {
      throw DivergenceError("gan diverged at iteration " + std::to_string(iter) + ": " +
                            e.what());
    }
  }

  return GanResult{std::move(generator), std::move(discriminator),
                   MechanismSpend{dp.sampling_rate, dp.noise_multiplier, dp.iterations}};
}

GenerationReport generate(const TrainedBundle& bundle, std::uint64_t count, std::uint64_t seed) {
  if (count == 0) {
    throw std::invalid_argument("generation count must be >= 1");
  }
  bundle.validate();
  const std::size_t noise_dim = bundle.generator.input_dim();
  RngStream rng(seed);
  std::vector<double> noise(count * noise_dim);
  for (double& v : noise) v = rng.normal();

  const std::vector<std::uint32_t> indices =
      kernels::generate_indices(bundle.generator, bundle.decoder, noise, count);
  GenerationReport report;
  report.synthetic = one_hot_decode(indices, bundle.vocabulary);
  report.samples = count;
  report.guarantee = bundle.combined_guarantee;
  return report;
}

RunResult run_travag(const SimpleEventLog& log, const TravagConfig& config) {
  if (log.empty()) {
    throw EmptyLogError("run needs a non-empty log");
  }
  config.validate();

  const VariantVocabulary vocab = fit_vocabulary(log);
  const BinaryMatrix matrix = one_hot_encode(log, vocab);

  TravagConfig effective = config;
  if (config.target && config.target->calibrate) {
    const PrivacyTarget& target = *config.target;
    const double epsilon_ae = target.epsilon * target.split_ratio;
    const double epsilon_disc = target.epsilon - epsilon_ae;
    const double delta_each = target.delta / 2.0;
    effective.autoencoder.noise_multiplier = calibrate_phi(
        epsilon_ae, delta_each, config.autoencoder.sampling_rate, config.autoencoder.iterations);
    effective.discriminator.noise_multiplier =
        calibrate_phi(epsilon_disc, delta_each, config.discriminator.sampling_rate,
                      config.discriminator.iterations);
  }

  const RngStream root(config.master_seed);
  RngStream ae_rng = root.derive(kStreamAutoencoderPhase);
  RngStream gan_rng = root.derive(kStreamGanPhase);

  AutoencoderResult ae = train_autoencoder(matrix, effective, ae_rng);
  GanResult gan = train_gan(matrix, ae.decoder, effective, gan_rng);

  TrainedBundle bundle;
  bundle.encoder = std::move(ae.encoder);
  bundle.decoder = std::move(ae.decoder);
  bundle.generator = std::move(gan.generator);
  bundle.discriminator = std::move(gan.discriminator);
  bundle.vocabulary = vocab;
  bundle.training_cases = log.case_count();
  bundle.autoencoder_spend = ae.spend;
  bundle.discriminator_spend = gan.spend;
  bundle.autoencoder_clip_norm = effective.autoencoder.clip_norm;
  bundle.discriminator_clip_norm = effective.discriminator.clip_norm;
  bundle.target = config.target;

  if (config.target) {
    const PrivacyTarget& target = *config.target;
    const double delta_each = target.delta / 2.0;
    bundle.autoencoder_guarantee = account_dpsgd(bundle.autoencoder_spend, delta_each);
    bundle.discriminator_guarantee = account_dpsgd(bundle.discriminator_spend, delta_each);
    bundle.combined_guarantee =
        combine_mechanisms(*bundle.autoencoder_guarantee, *bundle.discriminator_guarantee);
    if (bundle.combined_guarantee->epsilon > target.epsilon * (1.0 + 1e-12) ||
        bundle.combined_guarantee->delta > target.delta * (1.0 + 1e-12)) {
      throw CalibrationError(
          "accounted budget (" + std::to_string(bundle.combined_guarantee->epsilon) + ", " +
          std::to_string(bundle.combined_guarantee->delta) + ") exceeds the target (" +
          std::to_string(target.epsilon) + ", " + std::to_string(target.delta) + ")");
    }
  }

  const std::uint64_t count =
      config.generation_count == 0 ? log.case_count() : config.generation_count;
  GenerationReport report = generate(bundle, count, root.derive_seed(kStreamGeneration));
  return RunResult{std::move(report), std::move(bundle)};
}

GridSearchResult grid_search(const SimpleEventLog& log, const TravagConfig& base,
                             const GridSpec& grid, const PrivacyTarget& target) {
  if (log.empty()) {
    throw EmptyLogError("grid search needs a non-empty log");
  }
  if (grid.sampling_rates.empty() || grid.iterations.empty() ||
      grid.noise_multipliers.empty()) {
    throw std::invalid_argument("grid axes must be non-empty");
  }
  if (grid.trials < 1) {
    throw std::invalid_argument("grid search needs at least one trial");
  }

  GridSearchResult result;
  const double delta_each = target.delta / 2.0;
  for (const double q : grid.sampling_rates) {
    for (const std::uint64_t t : grid.iterations) {
      for (const double phi : grid.noise_multipliers) {
        GridPointScore score;
        score.sampling_rate = q;
        score.iterations = t;
        score.noise_multiplier = phi;
        const MechanismSpend spend{q, phi, t};
        const DpGuarantee per_mech = account_dpsgd(spend, delta_each);
        const DpGuarantee combined = combine_mechanisms(per_mech, per_mech);
        score.combined_epsilon = combined.epsilon;
        score.admissible = combined.epsilon <= target.epsilon;
        result.scores.push_back(score);
      }
    }
  }

  const bool any_admissible =
      std::any_of(result.scores.begin(), result.scores.end(),
                  [](const GridPointScore& s) { return s.admissible; });
  if (!any_admissible) {
    std::ostringstream message;
    message << "no grid point satisfies epsilon <= " << target.epsilon << ":";
    for (const GridPointScore& s : result.scores) {
      message << "\n  q=" << s.sampling_rate << " T=" << s.iterations
              << " phi=" << s.noise_multiplier << " -> epsilon=" << s.combined_epsilon;
    }
    throw CalibrationError(message.str());
  }

  const RngStream root(base.master_seed);
  std::size_t point_index = 0;
  for (GridPointScore& score : result.scores) {
    const std::size_t index = point_index++;
    if (!score.admissible) continue;

    TravagConfig trial_config = base;
    trial_config.target.reset();  // privacy verified upfront via the accountant
    trial_config.autoencoder.sampling_rate = score.sampling_rate;
    trial_config.autoencoder.iterations = score.iterations;
    trial_config.autoencoder.noise_multiplier = score.noise_multiplier;
    trial_config.discriminator.sampling_rate = score.sampling_rate;
    trial_config.discriminator.iterations = score.iterations;
    trial_config.discriminator.noise_multiplier = score.noise_multiplier;

    double similarity_sum = 0.0;
    double difference_sum = 0.0;
    for (int trial = 0; trial < grid.trials; ++trial) {
      trial_config.master_seed =
          root.derive_seed(kStreamGridPoint + index * 1024 + static_cast<std::uint64_t>(trial));
      const RunResult run = run_travag(log, trial_config);
      similarity_sum += relative_log_similarity(log, run.report.synthetic);
      difference_sum += absolute_log_difference(log, run.report.synthetic);
    }
    score.mean_similarity = similarity_sum / grid.trials;
    score.mean_abs_difference = difference_sum / grid.trials;
  }

  const GridPointScore* best = nullptr;
  for (const GridPointScore& s : result.scores) {
    if (!s.admissible) continue;
    if (best == nullptr || s.mean_similarity > best->mean_similarity ||
        (s.mean_similarity == best->mean_similarity &&
         (s.mean_abs_difference < best->mean_abs_difference ||
          (s.mean_abs_difference == best->mean_abs_difference &&
           s.noise_multiplier < best->noise_multiplier)))) {
      best = &s;
    }
  }

  result.best = base;
  result.best.autoencoder.sampling_rate = best->sampling_rate;
  result.best.autoencoder.iterations = best->iterations;
  result.best.autoencoder.noise_multiplier = best->noise_multiplier;
  result.best.discriminator.sampling_rate = best->sampling_rate;
  result.best.discriminator.iterations = best->iterations;
  result.best.discriminator.noise_multiplier = best->noise_multiplier;
  result.best.target = target;
  result.best.target->calibrate = false;  // the grid fixed phi; account, don't recalibrate
  return result;
}

namespace {

constexpr int kBundleFormatVersion = 1;

nlohmann::json guarantee_to_json(const DpGuarantee& g) {
  return {{"epsilon", g.epsilon}, {"delta", g.delta}, {"alpha_star", g.alpha_star}};
}

DpGuarantee guarantee_from_json(const nlohmann::json& j) {
  return DpGuarantee{j.at("epsilon").get<double>(), j.at("delta").get<double>(),
                     j.at("alpha_star").get<int>()};
}

nlohmann::json mechanism_to_json(const MechanismSpend& spend, double clip_norm,
                                 const std::optional<DpGuarantee>& guarantee) {
  nlohmann::json j = {{"sampling_rate", spend.sampling_rate},
                      {"noise_multiplier", spend.noise_multiplier},
                      {"iterations", spend.iterations},
                      {"clip_norm", clip_norm}};
  if (guarantee) j["guarantee"] = guarantee_to_json(*guarantee);
  return j;
}

void save_model_file(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  save_network(net, out);
}

Network load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  return load_network(in);
}

}  // namespace

void save_bundle(const TrainedBundle& bundle, const std::filesystem::path& dir) {
  bundle.validate();
  std::filesystem::create_directories(dir);
  save_model_file(bundle.encoder, dir / "encoder.json");
  save_model_file(bundle.decoder, dir / "decoder.json");
  save_model_file(bundle.generator, dir / "generator.json");
  save_model_file(bundle.discriminator, dir / "discriminator.json");
  {
    std::ofstream out(dir / "vocabulary.tsv");
    if (!out) throw FormatError("cannot write " + (dir / "vocabulary.tsv").string());
    bundle.vocabulary.save(out);
  }

  nlohmann::json ledger;
  ledger["format_version"] = kBundleFormatVersion;
  ledger["cases"] = bundle.training_cases;
  if (bundle.target) {
    ledger["target"] = {{"epsilon", bundle.target->epsilon},
                        {"delta", bundle.target->delta},
                        {"split_ratio", bundle.target->split_ratio}};
  }
  ledger["mechanisms"] = {
      {"autoencoder", mechanism_to_json(bundle.autoencoder_spend, bundle.autoencoder_clip_norm,
                                        bundle.autoencoder_guarantee)},
      {"discriminator",
       mechanism_to_json(bundle.discriminator_spend, bundle.discriminator_clip_norm,
                         bundle.discriminator_guarantee)}};
  if (bundle.combined_guarantee) {
    ledger["combined"] = guarantee_to_json(*bundle.combined_guarantee);
  }
  std::ofstream out(dir / "ledger.json");
  if (!out) throw FormatError("cannot write " + (dir / "ledger.json").string());
  out << ledger.dump(1) << '\n';
}

TrainedBundle load_bundle(const std::filesystem::path& dir) {
  TrainedBundle bundle;
  bundle.encoder = load_model_file(dir / "encoder.json");
  bundle.decoder = load_model_file(dir / "decoder.json");
  bundle.generator = load_model_file(dir / "generator.json");
  bundle.discriminator = load_model_file(dir / "discriminator.json");
  {
    std::ifstream in(dir / "vocabulary.tsv");
    if (!in) throw FormatError("cannot read " + (dir / "vocabulary.tsv").string());
    bundle.vocabulary = VariantVocabulary::load(in);
  }

  std::ifstream in(dir / "ledger.json");
  if (!in) throw FormatError("cannot read " + (dir / "ledger.json").string());
  nlohmann::json ledger;
  try {
    in >> ledger;
    if (ledger.at("format_version").get<int>() != kBundleFormatVersion) {
      throw FormatError("unsupported bundle format_version");
    }
    bundle.training_cases = ledger.at("cases").get<std::uint64_t>();
    if (ledger.contains("target")) {
      PrivacyTarget target;
      target.epsilon = ledger["target"].at("epsilon").get<double>();
      target.delta = ledger["target"].at("delta").get<double>();
      target.split_ratio = ledger["target"].at("split_ratio").get<double>();
      bundle.target = target;
    }
    const auto load_mechanism = [&](const char* key, MechanismSpend& spend, double& clip,
                                    std::optional<DpGuarantee>& guarantee) {
      const nlohmann::json& j = ledger.at("mechanisms").at(key);
      spend.sampling_rate = j.at("sampling_rate").get<double>();
      spend.noise_multiplier = j.at("noise_multiplier").get<double>();
      spend.iterations = j.at("iterations").get<std::uint64_t>();
      clip = j.at("clip_norm").get<double>();
      if (j.contains("guarantee")) guarantee = guarantee_from_json(j["guarantee"]);
    };
    load_mechanism("autoencoder", bundle.autoencoder_spend, bundle.autoencoder_clip_norm,
                   bundle.autoencoder_guarantee);
    load_mechanism("discriminator", bundle.discriminator_spend, bundle.discriminator_clip_norm,
                   bundle.discriminator_guarantee);
    if (ledger.contains("combined")) {
      bundle.combined_guarantee = guarantee_from_json(ledger["combined"]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ledger.json schema error: ") + e.what());
  }
  bundle.validate();
  return bundle;
}

}  // namespace travag
