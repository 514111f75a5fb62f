#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "ugan/checkpoint.hpp"
#include "ugan/losses.hpp"
#include "ugan/nets.hpp"
#include "ugan/pairgen.hpp"
#include "ugan/random.hpp"

namespace ugan::trainer {

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int n_critic = 5;
  int epochs = 100;
  losses::LossWeights weights = losses::LossWeights::ugan();
  std::uint64_t seed = 0;
  int image_size = 256;
  std::int64_t checkpoint_every = 0;  // iterations; 0 = only at the end
  std::int64_t max_iterations = 0;    // 0 = epochs * iterations_per_epoch
  int workers = 1;                    // image-loading threads
  nets::GeneratorSpec generator = nets::GeneratorSpec::paper();
  nets::CriticSpec critic = nets::CriticSpec::paper();

  void validate() const;

  static TrainConfig paper();
  // 64 x 64 images, batch 4, narrow networks; sized for CPU test runs.
  static TrainConfig desk();
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct Batch {
  torch::Tensor clean;      // [B, 3, H, W]
  torch::Tensor distorted;  // [B, 3, H, W]
};

// Cycles over a dataset in seeded random order, one full batch at a time.
// When fewer than batch_size unvisited samples remain, the order is
// reshuffled and the leftovers are skipped, so batches are never partial.
class PairSampler {
 public:
  PairSampler(std::vector<pairgen::ImagePair> pairs, int batch_size, std::uint64_t seed);
  PairSampler(std::vector<pairgen::ManifestEntry> entries, Size image_size, int batch_size,
              std::uint64_t seed, int workers = 1);

  Batch next();

  std::size_t size() const { return samples_.size(); }
  int batch_size() const { return batch_size_; }
  std::int64_t batches_per_epoch() const;
  std::int64_t reshuffles() const { return reshuffles_; }

  // Clean/distorted pairs in dataset order (loads on demand).
  pairgen::ImagePair pair(std::size_t index);

  nlohmann::json state() const;
  void restore(const nlohmann::json& state);

 private:
  struct Sample {
    std::filesystem::path clean_path;
    std::filesystem::path distorted_path;
    std::optional<pairgen::ImagePair> cached;
  };

  void reshuffle();
  pairgen::ImagePair load(std::size_t index);

  std::vector<Sample> samples_;
  Size image_size_{};
  int batch_size_ = 1;
  int workers_ = 1;
  bool cache_ = true;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::int64_t reshuffles_ = 0;
};

// Per-iteration log record. l1, gdl and gp are the weighted terms as they
// enter the objectives; critic_loss and gp come from the last critic step.
struct IterationRecord {
  std::int64_t iteration = 0;
  std::int64_t epoch = 0;
  double critic_loss = 0.0;
  double gen_loss = 0.0;
  double l1 = 0.0;
  double gdl = 0.0;
  double gp = 0.0;
  double wall_time = 0.0;  // seconds since the run (or resume) started
};

void to_json(nlohmann::json& j, const IterationRecord& r);
void from_json(const nlohmann::json& j, IterationRecord& r);

struct TrainState {
  explicit TrainState(const TrainConfig& config);

  TrainState(TrainState&&) = default;
  TrainState& operator=(TrainState&&) = default;

  nets::UNetGenerator generator;
  nets::PatchCritic critic;
  std::unique_ptr<torch::optim::Adam> generator_opt;
  std::unique_ptr<torch::optim::Adam> critic_opt;
  std::int64_t iteration = 0;
  std::int64_t epoch = 0;
  std::int64_t critic_updates = 0;
  std::int64_t generator_updates = 0;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
};

// n_critic critic steps, each on a fresh batch, then one generator step on
// another fresh batch. Generator parameters are untouched during critic
// steps and vice versa.
IterationRecord train_iteration(TrainState& state, PairSampler& sampler,
                                const TrainConfig& config);

// Saves weights, optimizer moments, counters, config and sampler state.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const PairSampler& sampler, const TrainConfig& config);

struct ResumedRun {
  TrainConfig config;
  TrainState state;
  nlohmann::json sampler_state;
};

ResumedRun load_checkpoint(const std::filesystem::path& path);

// Mean L1 between clean images and generator outputs in evaluation mode.
double evaluate_l1(nets::UNetGenerator& generator, PairSampler& data, int batch_size);

struct TrainOptions {
  std::filesystem::path out_dir = "run";
  std::optional<std::filesystem::path> resume;
  bool quiet = true;
};

struct TrainResult {
  TrainState state;
  std::vector<IterationRecord> records;
  std::vector<std::filesystem::path> checkpoints;
};

std::int64_t total_iterations(const TrainConfig& config, std::size_t train_size);

// Trains on the manifest's train split. Writes <out_dir>/metrics.jsonl,
// <out_dir>/ckpt-<iteration>.ugan at the configured cadence and
// <out_dir>/final.ugan at termination. Throws DatasetError when the split
// holds fewer pairs than one batch.
TrainResult train(const pairgen::DatasetManifest& manifest, const TrainConfig& config,
                  const TrainOptions& options);

}  // namespace ugan::trainer
