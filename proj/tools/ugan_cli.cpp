// ugan: command-line entry point for dataset preparation, training,
// restoration, benchmarking and evaluation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ugan/error.hpp"
#include "ugan/evalsuite.hpp"
#include "ugan/infer.hpp"
#include "ugan/pairgen.hpp"
#include "ugan/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

// key = value file; keys are long flag names without the leading dashes.
std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ugan::ConfigError("cannot open config file " + path.string());
  std::map<std::string, std::string> values;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) {
      throw ugan::ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": expected key = value");
    }
    values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return values;
}

template <typename T>
T parse_as(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) {
    throw ugan::ConfigError("config value for '" + key + "' is invalid: " + text);
  }
  return value;
}

// Command-line flag > config file > preset.
class Resolver {
 public:
  explicit Resolver(std::map<std::string, std::string> file) : file_(std::move(file)) {}

  template <typename T>
  void apply(const CLI::Option* option, const T& flag_value, const std::string& key, T& target) {
    used_.insert(key);
    if (option->count() > 0) {
      target = flag_value;
    } else if (const auto it = file_.find(key); it != file_.end()) {
      target = parse_as<T>(key, it->second);
    }
  }

  bool from_file(const std::string& key) const { return file_.contains(key); }
  std::optional<std::string> file_value(const std::string& key) const {
    const auto it = file_.find(key);
    return it == file_.end() ? std::nullopt : std::optional<std::string>(it->second);
  }

  void check_unused() const {
    for (const auto& [key, value] : file_) {
      if (!used_.contains(key)) throw ugan::ConfigError("unknown config key '" + key + "'");
    }
  }

 private:
  std::map<std::string, std::string> file_;
  std::set<std::string> used_;
};

struct PrepareArgs {
  std::string clean_dir;
  std::string distorted_dir;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::string out;
};

int run_prepare(const PrepareArgs& args) {
  try {
    auto ingest = ugan::pairgen::ingest_external_pairs(args.clean_dir, args.distorted_dir);
    for (const auto& warning : ingest.warnings) std::cerr << "warning: " << warning << '\n';
    const auto manifest =
        ugan::pairgen::build_split(ingest.manifest, args.test_fraction, args.seed);
    ugan::pairgen::write_manifest(args.out, manifest);
    std::cout << "wrote " << args.out << ": " << manifest.count(ugan::pairgen::Split::kTrain)
              << " train / " << manifest.count(ugan::pairgen::Split::kTest) << " test\n";
    return 0;
  } catch (const ugan::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

struct SynthArgs {
  std::string params_file;
  std::uint64_t seed = 0;
  std::string in_dir;
  std::string out_dir;
};

int run_synth(const SynthArgs& args) {
  ugan::pairgen::DistortionParams params;
  try {
    params = args.params_file.empty() ? ugan::pairgen::DistortionParams::underwater_preset()
                                      : ugan::pairgen::load_distortion_params(args.params_file);
  } catch (const ugan::Error& e) {
    std::cerr << "error: bad params file: " << e.what() << '\n';
    return kUsageError;
  }
  const auto written =
      ugan::pairgen::synth_distort_directory(args.in_dir, args.out_dir, params, args.seed);
  std::cout << "wrote " << written.size() << " distorted images to " << args.out_dir << '\n';
  return 0;
}

struct ScenesArgs {
  int count = 16;
  int size = 64;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int run_scenes(const ScenesArgs& args) {
  if (args.count < 1 || args.size < 8) {
    throw ugan::UsageError("--count must be >= 1 and --size >= 8");
  }
  fs::create_directories(args.out_dir);
  for (int i = 0; i < args.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04d.png", i);
    ugan::save_image(fs::path(args.out_dir) / name,
                     ugan::pairgen::synthetic_scene({args.size, args.size},
                                                    ugan::derive_seed(args.seed, i)));
  }
  std::cout << "wrote " << args.count << " scenes to " << args.out_dir << '\n';
  return 0;
}

struct TrainFlags {
  std::string manifest;
  std::string variant = "ugan";
  std::string preset = "paper";
  std::string config_file;
  std::string out_dir = "run";
  std::string resume;
  int epochs = 100;
  int batch_size = 32;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int n_critic = 5;
  double lambda1 = 100.0;
  double lambda2 = 1.0;
  double lambda_gp = 10.0;
  int alpha = 1;
  std::uint64_t seed = 0;
  std::int64_t iterations = 0;
  std::int64_t checkpoint_every = 0;
  int workers = 1;
  bool dump_config = false;
  bool verbose = false;
};

struct TrainOptions {
  CLI::Option* variant;
  CLI::Option* preset;
  CLI::Option* epochs;
  CLI::Option* batch_size;
  CLI::Option* lr;
  CLI::Option* beta1;
  CLI::Option* beta2;
  CLI::Option* n_critic;
  CLI::Option* lambda1;
  CLI::Option* lambda2;
  CLI::Option* lambda_gp;
  CLI::Option* alpha;
  CLI::Option* seed;
  CLI::Option* iterations;
  CLI::Option* checkpoint_every;
  CLI::Option* workers;
};

ugan::trainer::TrainConfig resolve_train_config(const TrainFlags& flags, const TrainOptions& opts) {
  Resolver resolver(flags.config_file.empty() ? std::map<std::string, std::string>{}
                                              : read_config_file(flags.config_file));
  std::string preset = "paper";
  resolver.apply(opts.preset, flags.preset, "preset", preset);
  ugan::trainer::TrainConfig config;
  if (preset == "paper") {
    config = ugan::trainer::TrainConfig::paper();
  } else if (preset == "desk") {
    config = ugan::trainer::TrainConfig::desk();
  } else {
    throw ugan::UsageError("unknown preset '" + preset + "' (expected paper or desk)");
  }

  std::string variant = "ugan";
  resolver.apply(opts.variant, flags.variant, "variant", variant);
  if (variant != "ugan" && variant != "ugan-p") {
    throw ugan::UsageError("unknown variant '" + variant + "' (expected ugan or ugan-p)");
  }

  resolver.apply(opts.epochs, flags.epochs, "epochs", config.epochs);
  resolver.apply(opts.batch_size, flags.batch_size, "batch-size", config.batch_size);
  resolver.apply(opts.lr, flags.lr, "lr", config.learning_rate);
  resolver.apply(opts.beta1, flags.beta1, "beta1", config.adam_beta1);
  resolver.apply(opts.beta2, flags.beta2, "beta2", config.adam_beta2);
  resolver.apply(opts.n_critic, flags.n_critic, "n-critic", config.n_critic);
  resolver.apply(opts.lambda1, flags.lambda1, "lambda1", config.weights.lambda_1);
  resolver.apply(opts.lambda_gp, flags.lambda_gp, "lambda-gp", config.weights.lambda_gp);
  resolver.apply(opts.alpha, flags.alpha, "alpha", config.weights.alpha);
  resolver.apply(opts.seed, flags.seed, "seed", config.seed);
  resolver.apply(opts.iterations, flags.iterations, "iterations", config.max_iterations);
  resolver.apply(opts.checkpoint_every, flags.checkpoint_every, "checkpoint-every",
                 config.checkpoint_every);
  resolver.apply(opts.workers, flags.workers, "workers", config.workers);

  double lambda2 = 1.0;
  resolver.apply(opts.lambda2, flags.lambda2, "lambda2", lambda2);
  if (variant == "ugan") {
    if (opts.lambda2->count() > 0 && flags.lambda2 != 0.0) {
      std::cerr << "warning: --variant ugan has no GDL term; ignoring --lambda2\n";
    }
    config.weights.lambda_2 = 0.0;
  } else {
    config.weights.lambda_2 = lambda2;
  }
  resolver.check_unused();
  config.validate();
  return config;
}

int run_train(const TrainFlags& flags, const TrainOptions& opts) {
  const auto config = resolve_train_config(flags, opts);
  if (flags.dump_config) {
    std::cout << nlohmann::json(config).dump(2) << '\n';
    return 0;
  }
  if (flags.manifest.empty()) throw ugan::UsageError("--manifest is required");
  const auto manifest = ugan::pairgen::read_manifest(flags.manifest);
  ugan::trainer::TrainOptions options;
  options.out_dir = flags.out_dir;
  options.quiet = !flags.verbose;
  if (!flags.resume.empty()) options.resume = flags.resume;
  const auto result = ugan::trainer::train(manifest, config, options);
  const auto& state = result.state;
  std::cout << "trained " << state.iteration << " iterations (" << state.critic_updates
            << " critic / " << state.generator_updates << " generator updates)\n";
  if (!result.records.empty()) {
    const auto& last = result.records.back();
    std::cout << "final critic_loss " << last.critic_loss << " gen_loss " << last.gen_loss
              << " l1 " << last.l1 << " gdl " << last.gdl << " gp " << last.gp << '\n';
  }
  std::cout << "checkpoint " << result.checkpoints.back().string() << '\n';
  return 0;
}

struct InferArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string out_dir;
  bool resize_to_source = false;
};

int run_infer(const InferArgs& args) {
  std::vector<fs::path> files;
  for (const auto& input : args.inputs) {
    if (fs::is_directory(input)) {
      const auto listed = ugan::pairgen::list_images(input);
      files.insert(files.end(), listed.begin(), listed.end());
    } else {
      files.emplace_back(input);
    }
  }
  if (files.empty()) throw ugan::UsageError("no input images given");
  const auto result = ugan::infer::restore(args.checkpoint, files, args.out_dir,
                                           {.resize_to_source = args.resize_to_source});
  for (const auto& failure : result.failures) std::cerr << "warning: skipped " << failure << '\n';
  std::cout << "restored " << result.written.size() << " of " << files.size() << " images into "
            << args.out_dir << '\n';
  return result.written.empty() ? kRuntimeFailure : 0;
}

struct BenchmarkArgs {
  std::string checkpoint;
  std::string preset = "paper";
  int trials = 100;
  std::string device;
  std::uint64_t seed = 0;
  bool json = false;
};

int run_benchmark(const BenchmarkArgs& args) {
  ugan::infer::BenchmarkResult result;
  if (!args.checkpoint.empty()) {
    result = ugan::infer::benchmark(args.checkpoint, args.trials, args.device);
  } else {
    auto spec = args.preset == "desk" ? ugan::nets::GeneratorSpec::desk()
              : args.preset == "paper"
                  ? ugan::nets::GeneratorSpec::paper()
                  : throw ugan::UsageError("unknown preset '" + args.preset + "'");
    ugan::infer::LoadedGenerator model{spec, ugan::nets::UNetGenerator(spec), 0};
    ugan::nets::init_weights(*model.generator, args.seed);
    model.generator->eval();
    result = ugan::infer::benchmark(model, args.trials, args.device);
  }
  if (args.json) {
    std::cout << nlohmann::json{{"mean_seconds_per_image", result.mean_seconds_per_image},
                                {"fps", result.fps},
                                {"trials", result.trials},
                                {"image_size", result.image_size},
                                {"device", result.device}}
                     .dump()
              << '\n';
  } else {
    std::cout << "device: " << result.device << '\n'
              << "image: " << result.image_size << "x" << result.image_size << "x3\n"
              << "trials: " << result.trials << '\n'
              << "mean_seconds_per_image: " << result.mean_seconds_per_image << '\n'
              << "fps: " << result.fps << '\n';
  }
  return 0;
}

struct EvaluateArgs {
  std::string original_dir;
  std::vector<std::string> methods;
  std::vector<std::string> patches;
  double low = 0.1;
  double high = 0.2;
  std::string distance = "euclidean";
  std::string out_dir;
};

int run_evaluate(const EvaluateArgs& args) {
  std::vector<ugan::eval::MethodDir> methods;
  for (const auto& text : args.methods) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
      throw ugan::UsageError("--method must look like label=directory (got '" + text + "')");
    }
    methods.push_back({text.substr(0, eq), text.substr(eq + 1)});
  }
  std::vector<ugan::eval::PatchSpec> patches;
  for (const auto& text : args.patches) patches.push_back(ugan::eval::parse_patch(text));
  if (args.distance != "euclidean" && args.distance != "count") {
    throw ugan::UsageError("--distance must be euclidean or count");
  }
  const auto kind = args.distance == "count" ? ugan::eval::EdgeDistance::kCount
                                             : ugan::eval::EdgeDistance::kEuclidean;
  const auto report = ugan::eval::run_report(args.original_dir, methods, patches,
                                             {args.low, args.high}, kind);
  ugan::eval::write_report(args.out_dir, report);
  std::cout << ugan::eval::format_summary(report);
  std::cout << "report written to " << (fs::path(args.out_dir) / "report.tsv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Underwater image restoration with adversarial networks (UGAN / UGAN-P)", "ugan"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 1 runtime failure, 2 usage error. "
             "UGAN_DEVICE selects the compute device label (default: automatic).");

  PrepareArgs prepare;
  auto* prepare_cmd = app.add_subcommand("prepare-data", "Pair clean/distorted images and split them");
  prepare_cmd->add_option("--clean-dir", prepare.clean_dir, "Directory of clean images")->required();
  prepare_cmd->add_option("--distorted-dir", prepare.distorted_dir,
                          "Directory of distorted counterparts (matched by filename stem)")
      ->required();
  prepare_cmd->add_option("--test-fraction", prepare.test_fraction, "Fraction of pairs held out")
      ->capture_default_str();
  prepare_cmd->add_option("--seed", prepare.seed, "Shuffle seed")->capture_default_str();
  prepare_cmd->add_option("--out", prepare.out, "Manifest file to write")->required();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-distort", "Apply the parametric distortion to a directory");
  synth_cmd->add_option("--params-file", synth.params_file,
                        "key = value file (red_attenuation, haze_color, haze_strength, "
                        "blur_radius, noise_std); default: built-in underwater preset");
  synth_cmd->add_option("--seed", synth.seed, "Noise seed")->capture_default_str();
  synth_cmd->add_option("--in-dir", synth.in_dir, "Clean images")->required();
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();

  ScenesArgs scenes;
  auto* scenes_cmd = app.add_subcommand("make-scenes", "Write procedural clean scenes for desk-scale runs");
  scenes_cmd->add_option("--count", scenes.count, "Number of images")->capture_default_str();
  scenes_cmd->add_option("--size", scenes.size, "Side length in pixels")->capture_default_str();
  scenes_cmd->add_option("--seed", scenes.seed, "Scene seed")->capture_default_str();
  scenes_cmd->add_option("--out-dir", scenes.out_dir, "Output directory")->required();

  TrainFlags train;
  TrainOptions topts{};
  auto* train_cmd = app.add_subcommand("train", "Train the generator and critic");
  train_cmd->add_option("--manifest", train.manifest, "Dataset manifest from prepare-data");
  topts.variant = train_cmd->add_option("--variant", train.variant,
                                        "ugan (L1 only, lambda2 forced to 0) or ugan-p (adds GDL)")
                      ->capture_default_str();
  topts.preset = train_cmd->add_option("--preset", train.preset,
                                       "paper (256x256, batch 32) or desk (64x64, batch 4, shallow nets)")
                     ->capture_default_str();
  train_cmd->add_option("--config", train.config_file,
                        "key = value file using long flag names; flags override it, it overrides the preset");
  topts.epochs = train_cmd->add_option("--epochs", train.epochs, "Training epochs (default: 100; desk: 75)");
  topts.batch_size = train_cmd->add_option("--batch-size", train.batch_size, "Batch size (default: 32; desk: 4)");
  topts.lr = train_cmd->add_option("--lr", train.lr, "Adam learning rate (default: 1e-4; desk: 2e-3)");
  topts.beta1 = train_cmd->add_option("--beta1", train.beta1, "Adam beta1 (default: 0.5)");
  topts.beta2 = train_cmd->add_option("--beta2", train.beta2, "Adam beta2 (default: 0.999)");
  topts.n_critic = train_cmd->add_option("--n-critic", train.n_critic,
                                         "Critic updates per generator update (default: 5)");
  topts.lambda1 = train_cmd->add_option("--lambda1", train.lambda1, "L1 weight (default: 100)");
  topts.lambda2 = train_cmd->add_option("--lambda2", train.lambda2, "GDL weight for ugan-p (default: 1.0)");
  topts.lambda_gp = train_cmd->add_option("--lambda-gp", train.lambda_gp,
                                          "Gradient penalty weight (default: 10)");
  topts.alpha = train_cmd->add_option("--alpha", train.alpha, "GDL exponent (default: 1)");
  topts.seed = train_cmd->add_option("--seed", train.seed, "Seed for weights, sampling and penalties (default: 0)");
  topts.iterations = train_cmd->add_option("--iterations", train.iterations,
                                           "Stop after this many iterations (default: 0 = epochs x N / batch)");
  topts.checkpoint_every = train_cmd->add_option("--checkpoint-every", train.checkpoint_every,
                                                 "Checkpoint cadence in iterations (default: 0 = end only)");
  topts.workers = train_cmd->add_option("--workers", train.workers, "Image loading threads (default: 1)");
  train_cmd->add_option("--out-dir", train.out_dir, "Run directory for checkpoints and metrics.jsonl")
      ->capture_default_str();
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint");
  train_cmd->add_flag("--dump-config", train.dump_config, "Print the resolved configuration and exit");
  train_cmd->add_flag("--verbose", train.verbose, "Log every iteration to stderr");

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "Restore images with a trained checkpoint");
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "Checkpoint file")->required();
  infer_cmd->add_option("--out-dir", infer.out_dir, "Output directory (PNG, same stem)")->required();
  infer_cmd->add_option("inputs", infer.inputs, "Input images or directories")->required();
  infer_cmd->add_flag("--resize-to-source", infer.resize_to_source,
                      "Resize outputs back to the input resolution (default: model resolution)");

  BenchmarkArgs bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "Time single-image inference");
  bench_cmd->add_option("--checkpoint", bench.checkpoint,
                        "Checkpoint file (default: randomly initialized --preset generator)");
  bench_cmd->add_option("--preset", bench.preset, "Generator preset without a checkpoint")
      ->capture_default_str();
  bench_cmd->add_option("--trials", bench.trials, "Timed trials, >= 10 (warm-up excluded)")
      ->capture_default_str();
  bench_cmd->add_option("--device", bench.device, "Device label (default: $UGAN_DEVICE or auto)");
  bench_cmd->add_option("--seed", bench.seed, "Weight seed without a checkpoint")->capture_default_str();
  bench_cmd->add_flag("--json", bench.json, "Print one JSON object");

  EvaluateArgs evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "Edge-map distance and patch metrics report");
  eval_cmd->add_option("--original-dir", evaluate.original_dir, "Reference images")->required();
  eval_cmd->add_option("--method", evaluate.methods, "label=directory of outputs (repeatable)")
      ->required();
  eval_cmd->add_option("--patch", evaluate.patches,
                       "label:top,left,height,width patch, resized to 64x64 (repeatable)");
  eval_cmd->add_option("--low", evaluate.low, "Canny low threshold")->capture_default_str();
  eval_cmd->add_option("--high", evaluate.high, "Canny high threshold")->capture_default_str();
  eval_cmd->add_option("--distance", evaluate.distance, "euclidean or count")->capture_default_str();
  eval_cmd->add_option("--out-dir", evaluate.out_dir, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (prepare_cmd->parsed()) return run_prepare(prepare);
    if (synth_cmd->parsed()) return run_synth(synth);
    if (scenes_cmd->parsed()) return run_scenes(scenes);
    if (train_cmd->parsed()) return run_train(train, topts);
    if (infer_cmd->parsed()) return run_infer(infer);
    if (bench_cmd->parsed()) return run_benchmark(bench);
    if (eval_cmd->parsed()) return run_evaluate(evaluate);
  } catch (const ugan::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}
