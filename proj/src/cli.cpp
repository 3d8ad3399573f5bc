#include "travag/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "travag/accountant.hpp"
#include "travag/errors.hpp"
#include "travag/eventlog.hpp"
#include "travag/kernels.hpp"
#include "travag/metrics.hpp"
#include "travag/pipeline.hpp"

namespace travag::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitSuccess = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

SimpleEventLog read_variant_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open log file: " + path.string());
  return parse_variant_table(in);
}

void write_variant_log(const fs::path& path, const SimpleEventLog& log) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write log file: " + path.string());
  write_variant_table(out, log);
}

std::uint64_t entropy_seed() {
  std::random_device device;
  return (static_cast<std::uint64_t>(device()) << 32) ^ device();
}

// ---------------------------------------------------------------------------
// Config document

struct IoConfig {
  fs::path input;
  std::string input_format = "variants";  // or "events"
  EventCsvConfig csv;
  fs::path output_dir = "travag-out";
};

struct RunConfig {
  IoConfig io;
  TravagConfig travag;
  GridSpec grid;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> generation_seed;
};

/// Collects schema violations so the user sees all of them at once.
class ConfigParser {
 public:
  explicit ConfigParser(const json& doc) : doc_(doc) {}

  template <typename T>
  void read(const char* section, const char* key, T& out) {
    const json* obj = section_obj(section);
    if (obj == nullptr || !obj->contains(key)) return;
    try {
      out = obj->at(key).get<T>();
    } catch (const json::exception&) {
      errors_ += "\n  " + dotted(section, key) + ": wrong type";
    }
  }

  template <typename T, typename Predicate>
  void read(const char* section, const char* key, T& out, Predicate valid,
            const char* requirement) {
    T value = out;
    read(section, key, value);
    if (!valid(value)) {
      errors_ += "\n  " + dotted(section, key) + ": " + requirement;
      return;
    }
    out = value;
  }

  bool has_section(const char* section) const { return doc_.contains(section); }

  void check_sections(std::initializer_list<const char*> known) {
    for (const auto& [key, value] : doc_.items()) {
      if (std::find_if(known.begin(), known.end(),
                       [&](const char* k) { return key == k; }) == known.end()) {
        errors_ += "\n  " + key + ": unknown section";
      }
    }
  }

  void finish() const {
    if (!errors_.empty()) {
      throw ConfigError("config schema violations:" + errors_);
    }
  }

 private:
  const json* section_obj(const char* section) {
    if (section == nullptr || *section == '\0') return &doc_;
    if (!doc_.contains(section)) return nullptr;
    const json& s = doc_.at(section);
    if (!s.is_object()) {
      if (!flagged_sections_.contains(section)) {
        errors_ += std::string("\n  ") + section + ": must be an object";
        flagged_sections_.insert(section);
      }
      return nullptr;
    }
    return &s;
  }

  static std::string dotted(const char* section, const char* key) {
    return (section == nullptr || *section == '\0') ? key : std::string(section) + "." + key;
  }

  const json& doc_;
  std::string errors_;
  std::set<std::string> flagged_sections_;
};

void read_dp_section(ConfigParser& p, const char* section, DpSgdConfig& dp) {
  const auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  p.read(section, "clip_norm", dp.clip_norm, positive, "must be positive");
  p.read(section, "noise_multiplier", dp.noise_multiplier,
         [](double v) { return v >= 0.0 && std::isfinite(v); }, "must be >= 0");
  p.read(section, "sampling_rate", dp.sampling_rate,
         [](double v) { return v > 0.0 && v <= 1.0; }, "must lie in (0, 1]");
  p.read(section, "learning_rate", dp.learning_rate, positive, "must be positive");
  p.read(section, "iterations", dp.iterations, [](std::uint64_t v) { return v >= 1; },
         "must be >= 1");
  p.read(section, "microbatch_size", dp.microbatch_size,
         [](std::size_t v) { return v >= 1; }, "must be >= 1");
}

RunConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");

  RunConfig config;
  ConfigParser p(doc);
  p.check_sections({"seed", "io", "autoencoder", "gan", "privacy", "generation", "gridsearch"});

  std::uint64_t seed = 0;
  if (doc.contains("seed")) {
    p.read("", "seed", seed);
    config.seed = seed;
  }

  std::string input;
  p.read("io", "input", input);
  config.io.input = input;
  p.read("io", "input_format", config.io.input_format,
         [](const std::string& v) { return v == "variants" || v == "events"; },
         "must be 'variants' or 'events'");
  p.read("io", "case_column", config.io.csv.case_column);
  p.read("io", "activity_column", config.io.csv.activity_column);
  p.read("io", "timestamp_column", config.io.csv.timestamp_column);
  std::string output_dir = config.io.output_dir.string();
  p.read("io", "output_dir", output_dir);
  config.io.output_dir = output_dir;

  TravagConfig& t = config.travag;
  read_dp_section(p, "autoencoder", t.autoencoder);
  p.read("autoencoder", "latent_dim", t.latent_dim);
  p.read("autoencoder", "hidden_dim", t.hidden_dim,
         [](std::size_t v) { return v >= 1; }, "must be >= 1");
  p.read("autoencoder", "encoder_learning_rate", t.encoder_learning_rate,
         [](double v) { return v > 0.0; }, "must be positive");
  read_dp_section(p, "gan", t.discriminator);
  p.read("gan", "noise_dim", t.noise_dim, [](std::size_t v) { return v >= 1; },
         "must be >= 1");
  p.read("gan", "generator_learning_rate", t.generator_learning_rate,
         [](double v) { return v > 0.0; }, "must be positive");

  if (p.has_section("privacy")) {
    PrivacyTarget target;
    p.read("privacy", "target_epsilon", target.epsilon, [](double v) { return v > 0.0; },
           "must be positive");
    p.read("privacy", "target_delta", target.delta,
           [](double v) { return v > 0.0 && v < 1.0; }, "must lie in (0, 1)");
    p.read("privacy", "split_ratio", target.split_ratio,
           [](double v) { return v > 0.0 && v < 1.0; }, "must lie in (0, 1)");
    p.read("privacy", "calibrate", target.calibrate);
    t.target = target;
  }

  p.read("generation", "count", t.generation_count);
  if (doc.contains("generation") && doc["generation"].is_object() &&
      doc["generation"].contains("seed")) {
    std::uint64_t generation_seed = 0;
    p.read("generation", "seed", generation_seed);
    config.generation_seed = generation_seed;
  }

  p.read("gridsearch", "sampling_rates", config.grid.sampling_rates);
  p.read("gridsearch", "iterations", config.grid.iterations);
  p.read("gridsearch", "noise_multipliers", config.grid.noise_multipliers);
  p.read("gridsearch", "trials", config.grid.trials, [](int v) { return v >= 1; },
         "must be >= 1");

  p.finish();
  return config;
}

json config_to_json(const TravagConfig& t) {
  json doc;
  doc["seed"] = t.master_seed;
  doc["autoencoder"] = {{"clip_norm", t.autoencoder.clip_norm},
                        {"noise_multiplier", t.autoencoder.noise_multiplier},
                        {"sampling_rate", t.autoencoder.sampling_rate},
                        {"learning_rate", t.autoencoder.learning_rate},
                        {"iterations", t.autoencoder.iterations},
                        {"microbatch_size", t.autoencoder.microbatch_size},
                        {"latent_dim", t.latent_dim},
                        {"hidden_dim", t.hidden_dim},
                        {"encoder_learning_rate", t.encoder_learning_rate}};
  doc["gan"] = {{"clip_norm", t.discriminator.clip_norm},
                {"noise_multiplier", t.discriminator.noise_multiplier},
                {"sampling_rate", t.discriminator.sampling_rate},
                {"learning_rate", t.discriminator.learning_rate},
                {"iterations", t.discriminator.iterations},
                {"microbatch_size", t.discriminator.microbatch_size},
                {"noise_dim", t.noise_dim},
                {"generator_learning_rate", t.generator_learning_rate}};
  if (t.target) {
    doc["privacy"] = {{"target_epsilon", t.target->epsilon},
                      {"target_delta", t.target->delta},
                      {"split_ratio", t.target->split_ratio},
                      {"calibrate", t.target->calibrate}};
  }
  doc["generation"] = {{"count", t.generation_count}};
  return doc;
}

SimpleEventLog load_input_log(const IoConfig& io) {
  if (io.input.empty()) {
    throw ConfigError("config schema violations:\n  io.input: required");
  }
  std::ifstream in(io.input);
  if (!in) throw FormatError("cannot open input log: " + io.input.string());
  if (io.input_format == "events") {
    return parse_event_csv(in, io.csv);
  }
  return parse_variant_table(in);
}

// ---------------------------------------------------------------------------
// Subcommands

struct ConvertArgs {
  std::string input;
  std::string output;
  EventCsvConfig csv;
};

int cmd_convert(const ConvertArgs& args) {
  std::ifstream in(args.input);
  if (!in) throw FormatError("cannot open input CSV: " + args.input);
  const SimpleEventLog log = parse_event_csv(in, args.csv);
  write_variant_log(args.output, log);
  const std::uint64_t uniqueness = log.case_count() == 0
                                       ? 0
                                       : log.variant_count() * 100 / log.case_count();
  std::cout << log.event_count() << " events, " << log.case_count() << " cases, "
            << log.activity_count() << " activities, " << log.variant_count()
            << " variants, " << uniqueness << "%\n";
  return kExitSuccess;
}

struct RunArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> target_epsilon;
  std::optional<double> target_delta;
  std::string output_dir;  // overrides io.output_dir when set
};

int cmd_run(const RunArgs& args) {
  RunConfig config = parse_config(args.config_path);
  if (args.target_epsilon || args.target_delta) {
    PrivacyTarget target = config.travag.target.value_or(PrivacyTarget{});
    if (args.target_epsilon) target.epsilon = *args.target_epsilon;
    if (args.target_delta) target.delta = *args.target_delta;
    config.travag.target = target;
  }
  if (!args.output_dir.empty()) config.io.output_dir = args.output_dir;

  std::uint64_t seed;
  if (args.seed) {
    seed = *args.seed;
  } else if (config.seed) {
    seed = *config.seed;
  } else {
    seed = entropy_seed();
    std::cout << "seed chosen from entropy: " << seed << "\n";
  }
  config.travag.master_seed = seed;

  const SimpleEventLog log = load_input_log(config.io);
  const RunResult result = run_travag(log, config.travag);

  const fs::path out_dir = config.io.output_dir;
  fs::create_directories(out_dir);
  write_variant_log(out_dir / "synthetic.tsv", result.report.synthetic);
  save_bundle(result.bundle, out_dir / "bundle");
  fs::copy_file(out_dir / "bundle" / "ledger.json", out_dir / "privacy_ledger.json",
                fs::copy_options::overwrite_existing);

  std::cout << "seed\t" << seed << "\n"
            << "cases\t" << log.case_count() << "\n"
            << "variants\t" << log.variant_count() << "\n"
            << "generated\t" << result.report.samples << "\n";
  if (result.bundle.combined_guarantee) {
    std::cout << "epsilon\t" << result.bundle.combined_guarantee->epsilon << "\n"
              << "delta\t" << result.bundle.combined_guarantee->delta << "\n";
  } else {
    std::cout << "privacy\tdisabled (no target configured)\n";
  }
  std::cout << "synthetic_log\t" << (out_dir / "synthetic.tsv").string() << "\n"
            << "bundle\t" << (out_dir / "bundle").string() << "\n"
            << "ledger\t" << (out_dir / "privacy_ledger.json").string() << "\n";
  return kExitSuccess;
}

struct GenerateArgs {
  std::string bundle_dir;
  std::string output;
  std::uint64_t count = 0;  // 0 = one sample per original training case
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& args) {
  const TrainedBundle bundle = load_bundle(args.bundle_dir);
  std::uint64_t seed;
  if (args.seed) {
    seed = *args.seed;
  } else {
    seed = entropy_seed();
    std::cout << "seed chosen from entropy: " << seed << "\n";
  }
  const std::uint64_t count = args.count == 0 ? bundle.training_cases : args.count;
  // Sampling a trained model is post-processing: no extra privacy cost.
  const GenerationReport report = generate(bundle, count, seed);
  write_variant_log(args.output, report.synthetic);
  std::cout << "generated\t" << report.samples << "\n"
            << "variants\t" << report.synthetic.variant_count() << "\n"
            << "output\t" << args.output << "\n";
  return kExitSuccess;
}

struct EvaluateArgs {
  std::string original;
  std::string synthetic;
};

int cmd_evaluate(const EvaluateArgs& args) {
  const SimpleEventLog original = read_variant_log(args.original);
  const SimpleEventLog synthetic = read_variant_log(args.synthetic);
  const double similarity = relative_log_similarity(original, synthetic);
  const double difference = absolute_log_difference(original, synthetic);
  std::cout << "relative_log_similarity\tabsolute_log_difference\toriginal_variants\t"
               "synthetic_variants\toriginal_cases\tsynthetic_cases\n";
  std::cout << similarity << '\t' << difference << '\t' << original.variant_count() << '\t'
            << synthetic.variant_count() << '\t' << original.case_count() << '\t'
            << synthetic.case_count() << "\n";
  return kExitSuccess;
}

struct AccountArgs {
  double q = 1.0;
  double phi = 1.0;
  std::uint64_t iterations = 1;
  double delta = 1e-5;
};

int cmd_account(const AccountArgs& args) {
  const MechanismSpend spend{args.q, args.phi, args.iterations};
  const DpGuarantee guarantee = account_dpsgd(spend, args.delta);
  std::cout << "epsilon\t" << guarantee.epsilon << "\n";
  std::cout << "alpha_star\t" << guarantee.alpha_star << "\n";
  std::cout << "alpha\teps_rdp\teps_dp\n";
  const RdpCurve curve =
      compose(subsampled_gaussian_curve(args.q, args.phi), args.iterations);
  const double log_inv_delta = std::log(1.0 / args.delta);
  for (const auto& [alpha, eps_rdp] : curve.points) {
    std::cout << alpha << '\t' << eps_rdp << '\t'
              << eps_rdp + log_inv_delta / (static_cast<double>(alpha) - 1.0) << "\n";
  }
  return kExitSuccess;
}

struct CalibrateArgs {
  double target_eps = 1.0;
  double delta = 1e-5;
  double q = 1.0;
  std::uint64_t iterations = 1;
};

int cmd_calibrate(const CalibrateArgs& args) {
  std::cout << calibrate_phi(args.target_eps, args.delta, args.q, args.iterations) << "\n";
  return kExitSuccess;
}

struct GridSearchArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  std::string output;  // best-config JSON; empty = stdout only
};

int cmd_gridsearch(const GridSearchArgs& args) {
  RunConfig config = parse_config(args.config_path);
  if (!config.travag.target) {
    throw ConfigError("config schema violations:\n  privacy: required for gridsearch");
  }
  if (config.grid.sampling_rates.empty() || config.grid.iterations.empty() ||
      config.grid.noise_multipliers.empty()) {
    throw ConfigError(
        "config schema violations:\n  gridsearch: sampling_rates, iterations and "
        "noise_multipliers must be non-empty");
  }
  if (args.jobs > 0) kernels::set_threads(args.jobs);

  std::uint64_t seed;
  if (args.seed) {
    seed = *args.seed;
  } else if (config.seed) {
    seed = *config.seed;
  } else {
    seed = entropy_seed();
    std::cout << "seed chosen from entropy: " << seed << "\n";
  }
  config.travag.master_seed = seed;

  const SimpleEventLog log = load_input_log(config.io);
  const GridSearchResult result =
      grid_search(log, config.travag, config.grid, *config.travag.target);

  std::cout << "sampling_rate\titerations\tnoise_multiplier\tcombined_epsilon\tadmissible\t"
               "mean_similarity\tmean_abs_difference\n";
  for (const GridPointScore& s : result.scores) {
    std::cout << s.sampling_rate << '\t' << s.iterations << '\t' << s.noise_multiplier << '\t'
              << s.combined_epsilon << '\t' << (s.admissible ? 1 : 0) << '\t'
              << s.mean_similarity << '\t' << s.mean_abs_difference << "\n";
  }

  const json best = config_to_json(result.best);
  if (!args.output.empty()) {
    std::ofstream out(args.output);
    if (!out) throw FormatError("cannot write best config: " + args.output);
    out << best.dump(1) << '\n';
    std::cout << "best_config\t" << args.output << "\n";
  } else {
    std::cout << best.dump(1) << "\n";
  }
  return kExitSuccess;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Differentially private trace-variant synthesis for event logs"};
  app.require_subcommand(1);

  ConvertArgs convert_args;
  CLI::App* convert = app.add_subcommand(
      "convert", "Convert an event CSV into a variant table and print log statistics");
  convert->add_option("--input", convert_args.input, "Event CSV path")->required();
  convert->add_option("--output", convert_args.output, "Variant TSV path")->required();
  convert->add_option("--case-column", convert_args.csv.case_column, "Case id column name");
  convert->add_option("--activity-column", convert_args.csv.activity_column,
                      "Activity column name");
  convert->add_option("--timestamp-column", convert_args.csv.timestamp_column,
                      "Timestamp column name");

  RunArgs run_args;
  CLI::App* run_cmd = app.add_subcommand(
      "run", "Train on a log and write the synthetic log, bundle and privacy ledger");
  run_cmd->add_option("--config", run_args.config_path, "Run config JSON")->required();
  std::uint64_t run_seed = 0;
  CLI::Option* run_seed_opt = run_cmd->add_option("--seed", run_seed, "Master seed");
  double run_eps = 0.0, run_delta = 0.0;
  CLI::Option* run_eps_opt =
      run_cmd->add_option("--target-eps", run_eps, "Override the target epsilon");
  CLI::Option* run_delta_opt =
      run_cmd->add_option("--target-delta", run_delta, "Override the target delta");
  run_cmd->add_option("--output-dir", run_args.output_dir, "Override io.output_dir");

  GenerateArgs generate_args;
  CLI::App* generate_cmd =
      app.add_subcommand("generate", "Sample a saved bundle without retraining");
  generate_cmd->add_option("--bundle", generate_args.bundle_dir, "Bundle directory")->required();
  generate_cmd->add_option("--output", generate_args.output, "Variant TSV path")->required();
  generate_cmd
      ->add_option("--count", generate_args.count,
                   "Samples to draw (default: one per original case)")
      ->check(CLI::PositiveNumber);
  std::uint64_t generate_seed = 0;
  CLI::Option* generate_seed_opt = generate_cmd->add_option("--seed", generate_seed, "Seed");

  EvaluateArgs evaluate_args;
  CLI::App* evaluate_cmd =
      app.add_subcommand("evaluate", "Utility metrics between two variant tables");
  evaluate_cmd->add_option("--original", evaluate_args.original, "Original log TSV")->required();
  evaluate_cmd->add_option("--synthetic", evaluate_args.synthetic, "Synthetic log TSV")
      ->required();

  AccountArgs account_args;
  CLI::App* account_cmd = app.add_subcommand(
      "account", "Accounted (epsilon, delta) for a DP-SGD mechanism, with the RDP table");
  account_cmd->add_option("--q", account_args.q, "Poisson sampling rate")->required();
  account_cmd->add_option("--phi", account_args.phi, "Noise multiplier")->required();
  account_cmd->add_option("--iterations", account_args.iterations, "Iterations T")->required();
  account_cmd->add_option("--delta", account_args.delta, "Delta")->required();

  CalibrateArgs calibrate_args;
  CLI::App* calibrate_cmd =
      app.add_subcommand("calibrate", "Smallest noise multiplier meeting an epsilon target");
  calibrate_cmd->add_option("--target-eps", calibrate_args.target_eps, "Target epsilon")
      ->required();
  calibrate_cmd->add_option("--delta", calibrate_args.delta, "Delta")->required();
  calibrate_cmd->add_option("--q", calibrate_args.q, "Poisson sampling rate")->required();
  calibrate_cmd->add_option("--iterations", calibrate_args.iterations, "Iterations T")
      ->required();

  GridSearchArgs grid_args;
  CLI::App* grid_cmd = app.add_subcommand(
      "gridsearch", "Score a (q, T, phi) grid under a privacy target and pick the best");
  grid_cmd->add_option("--config", grid_args.config_path, "Run config JSON with a gridsearch section")
      ->required();
  std::uint64_t grid_seed = 0;
  CLI::Option* grid_seed_opt = grid_cmd->add_option("--seed", grid_seed, "Master seed");
  grid_cmd->add_option("--jobs", grid_args.jobs, "Worker thread cap")->check(CLI::PositiveNumber);
  grid_cmd->add_option("--output", grid_args.output, "Write the best config JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*convert) return cmd_convert(convert_args);
    if (*run_cmd) {
      if (*run_seed_opt) run_args.seed = run_seed;
      if (*run_eps_opt) run_args.target_epsilon = run_eps;
      if (*run_delta_opt) run_args.target_delta = run_delta;
      return cmd_run(run_args);
    }
    if (*generate_cmd) {
      if (*generate_seed_opt) generate_args.seed = generate_seed;
      return cmd_generate(generate_args);
    }
    if (*evaluate_cmd) return cmd_evaluate(evaluate_args);
    if (*account_cmd) return cmd_account(account_args);
    if (*calibrate_cmd) return cmd_calibrate(calibrate_args);
    if (*grid_cmd) {
      if (*grid_seed_opt) grid_args.seed = grid_seed;
      return cmd_gridsearch(grid_args);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace travag::cli
