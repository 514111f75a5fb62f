#include "ugan/trainer.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <iostream>

#include "ugan/error.hpp"

namespace fs = std::filesystem;

namespace ugan::trainer {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (n_critic < 1) throw ConfigError("n_critic must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (epochs < 0 || max_iterations < 0 || checkpoint_every < 0) {
    throw ConfigError("epochs, max_iterations and checkpoint_every must be non-negative");
  }
  if (workers < 1) throw ConfigError("workers must be >= 1");
  weights.validate();
  if (generator.image_size != image_size || critic.image_size != image_size) {
    throw ConfigError("network specs must use the configured image_size " +
                      std::to_string(image_size));
  }
  try {
    generator.validate();
    critic.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig config;
  config.batch_size = 4;
  config.image_size = 64;
  config.learning_rate = 2e-3;
  config.epochs = 75;
  config.generator = nets::GeneratorSpec::desk();
  config.critic = nets::CriticSpec::desk();
  return config;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"n_critic", c.n_critic},
       {"epochs", c.epochs},
       {"weights", c.weights},
       {"seed", c.seed},
       {"image_size", c.image_size},
       {"checkpoint_every", c.checkpoint_every},
       {"max_iterations", c.max_iterations},
       {"workers", c.workers},
       {"generator", c.generator},
       {"critic", c.critic}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("batch_size").get_to(c.batch_size);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("adam_beta1").get_to(c.adam_beta1);
  j.at("adam_beta2").get_to(c.adam_beta2);
  j.at("n_critic").get_to(c.n_critic);
  j.at("epochs").get_to(c.epochs);
  j.at("weights").get_to(c.weights);
  j.at("seed").get_to(c.seed);
  j.at("image_size").get_to(c.image_size);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  j.at("max_iterations").get_to(c.max_iterations);
  j.at("workers").get_to(c.workers);
  j.at("generator").get_to(c.generator);
  j.at("critic").get_to(c.critic);
}

namespace {

// Datasets above this many bytes are streamed from disk instead of cached.
constexpr std::size_t kCacheLimitBytes = std::size_t{1} << 30;

}  // namespace

PairSampler::PairSampler(std::vector<pairgen::ImagePair> pairs, int batch_size,
                         std::uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
  if (pairs.empty()) throw DatasetError("sampler needs at least one pair");
  image_size_ = pairs.front().clean.size();
  for (auto& pair : pairs) {
    if (pair.clean.size() != image_size_) throw DimensionError("sampler pairs differ in size");
    samples_.push_back({{}, {}, std::move(pair)});
  }
  if (batch_size_ < 1 || static_cast<std::size_t>(batch_size_) > samples_.size()) {
    throw DatasetError("dataset has " + std::to_string(samples_.size()) +
                       " pairs, fewer than one batch of " + std::to_string(batch_size_) +
                       "; reduce batch_size");
  }
  reshuffle();
  reshuffles_ = 0;
}

PairSampler::PairSampler(std::vector<pairgen::ManifestEntry> entries, Size image_size,
                         int batch_size, std::uint64_t seed, int workers)
    : image_size_(image_size), batch_size_(batch_size), workers_(std::max(1, workers)), rng_(seed) {
  for (auto& entry : entries) {
    samples_.push_back({std::move(entry.clean), std::move(entry.distorted), std::nullopt});
  }
  if (batch_size_ < 1 || static_cast<std::size_t>(batch_size_) > samples_.size()) {
    throw DatasetError("dataset has " + std::to_string(samples_.size()) +
                       " training pairs, fewer than one batch of " + std::to_string(batch_size_) +
                       "; reduce batch_size");
  }
  const std::size_t bytes = samples_.size() * 2 * static_cast<std::size_t>(image_size.height) *
                            image_size.width * 3 * sizeof(float);
  cache_ = bytes <= kCacheLimitBytes;
  reshuffle();
  reshuffles_ = 0;
}

std::int64_t PairSampler::batches_per_epoch() const {
  return static_cast<std::int64_t>(samples_.size()) / batch_size_;
}

void PairSampler::reshuffle() {
  order_.resize(samples_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  rng_.shuffle(order_);
  cursor_ = 0;
  ++reshuffles_;
}

pairgen::ImagePair PairSampler::load(std::size_t index) {
  auto& sample = samples_[index];
  if (sample.cached) return *sample.cached;
  pairgen::ImagePair pair(load_image(sample.clean_path, image_size_),
                          load_image(sample.distorted_path, image_size_));
  if (cache_) sample.cached = pair;
  return pair;
}

pairgen::ImagePair PairSampler::pair(std::size_t index) {
  if (index >= samples_.size()) throw DatasetError("sample index out of range");
  return load(index);
}

Batch PairSampler::next() {
  if (cursor_ + static_cast<std::size_t>(batch_size_) > order_.size()) reshuffle();
  std::vector<std::size_t> picks(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(cursor_) + batch_size_);
  cursor_ += static_cast<std::size_t>(batch_size_);

  std::vector<std::optional<pairgen::ImagePair>> loaded(picks.size());
  if (workers_ > 1) {
    // Loads are pure; results are placed by position, so the batch is
    // identical to the single-worker one.
    std::vector<std::future<pairgen::ImagePair>> pending;
    for (std::size_t start = 0; start < picks.size(); start += static_cast<std::size_t>(workers_)) {
      pending.clear();
      const std::size_t stop = std::min(picks.size(), start + static_cast<std::size_t>(workers_));
      for (std::size_t k = start; k < stop; ++k) {
        const auto& s = samples_[picks[k]];
        if (s.cached) {
          pending.push_back(std::async(std::launch::deferred, [&s] { return *s.cached; }));
        } else {
          pending.push_back(std::async(std::launch::async, [this, &s] {
            return pairgen::ImagePair(load_image(s.clean_path, image_size_),
                                      load_image(s.distorted_path, image_size_));
          }));
        }
      }
      for (std::size_t k = start; k < stop; ++k) {
        loaded[k] = pending[k - start].get();
        if (cache_ && !samples_[picks[k]].cached) samples_[picks[k]].cached = loaded[k];
      }
    }
  } else {
    for (std::size_t k = 0; k < picks.size(); ++k) loaded[k] = load(picks[k]);
  }

  std::vector<ImageTensor> clean;
  std::vector<ImageTensor> distorted;
  for (auto& pair : loaded) {
    clean.push_back(std::move(pair->clean));
    distorted.push_back(std::move(pair->distorted));
  }
  return {nets::to_batch(clean), nets::to_batch(distorted)};
}

nlohmann::json PairSampler::state() const {
  return {{"order", order_}, {"cursor", cursor_}, {"rng", rng_.serialize()},
          {"reshuffles", reshuffles_}, {"size", samples_.size()}};
}

void PairSampler::restore(const nlohmann::json& state) {
  if (state.at("size").get<std::size_t>() != samples_.size()) {
    throw CheckpointError("checkpoint sampler was built over a different dataset size");
  }
  order_ = state.at("order").get<std::vector<std::size_t>>();
  cursor_ = state.at("cursor").get<std::size_t>();
  reshuffles_ = state.at("reshuffles").get<std::int64_t>();
  rng_.restore(state.at("rng").get<std::string>());
}

void to_json(nlohmann::json& j, const IterationRecord& r) {
  j = {{"iteration", r.iteration}, {"epoch", r.epoch},   {"critic_loss", r.critic_loss},
       {"gen_loss", r.gen_loss},   {"l1", r.l1},         {"gdl", r.gdl},
       {"gp", r.gp},               {"wall_time", r.wall_time}};
}

void from_json(const nlohmann::json& j, IterationRecord& r) {
  j.at("iteration").get_to(r.iteration);
  j.at("epoch").get_to(r.epoch);
  j.at("critic_loss").get_to(r.critic_loss);
  j.at("gen_loss").get_to(r.gen_loss);
  j.at("l1").get_to(r.l1);
  j.at("gdl").get_to(r.gdl);
  j.at("gp").get_to(r.gp);
  j.at("wall_time").get_to(r.wall_time);
}

namespace {

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params,
                                              const TrainConfig& config) {
  return std::make_unique<torch::optim::Adam>(
      std::move(params), torch::optim::AdamOptions(config.learning_rate)
                             .betas({config.adam_beta1, config.adam_beta2}));
}

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters()) p.set_requires_grad(flag);
}

}  // namespace

TrainState::TrainState(const TrainConfig& config)
    : generator(config.generator), critic(config.critic) {
  config.validate();
  nets::init_weights(*generator, derive_seed(config.seed, 1));
  nets::init_weights(*critic, derive_seed(config.seed, 2));
  generator->train();
  critic->train();
  generator_opt = make_adam(generator->parameters(), config);
  critic_opt = make_adam(critic->parameters(), config);
}

IterationRecord train_iteration(TrainState& state, PairSampler& sampler,
                                const TrainConfig& config) {
  if (sampler.batch_size() != config.batch_size) {
    throw ConfigError("sampler batch size differs from the configured batch_size");
  }
  IterationRecord record;
  state.generator->train();

  for (int step = 0; step < config.n_critic; ++step) {
    const Batch batch = sampler.next();
    torch::Tensor fake;
    {
      torch::NoGradGuard no_grad;
      fake = state.generator->forward(batch.distorted);
    }
    const auto d_real = state.critic->forward(batch.clean);
    const auto d_fake = state.critic->forward(fake);
    const auto epsilon_seed = derive_seed(
        config.seed, static_cast<std::uint64_t>(state.iteration * config.n_critic + step) + 1000);
    const auto critic_fn = [&](const torch::Tensor& x) { return state.critic->forward(x); };
    const auto gp = losses::gradient_penalty(critic_fn, batch.clean, fake,
                                             config.weights.lambda_gp, epsilon_seed);
    const auto loss = losses::critic_loss(d_real, d_fake, gp);
    state.critic_opt->zero_grad();
    loss.backward();
    state.critic_opt->step();
    ++state.critic_updates;
    record.critic_loss = loss.item<double>();
    record.gp = gp.item<double>();
  }

  const Batch batch = sampler.next();
  set_requires_grad(*state.critic, false);
  const auto predicted = state.generator->forward(batch.distorted);
  const auto d_fake = state.critic->forward(predicted);
  const auto terms = losses::generator_loss(d_fake, batch.clean, predicted, config.weights);
  state.generator_opt->zero_grad();
  terms.total.backward();
  state.generator_opt->step();
  set_requires_grad(*state.critic, true);
  ++state.generator_updates;

  ++state.iteration;
  state.epoch = state.iteration / std::max<std::int64_t>(1, sampler.batches_per_epoch());
  record.iteration = state.iteration;
  record.epoch = state.epoch;
  record.gen_loss = terms.total.item<double>();
  record.l1 = terms.l1.item<double>();
  record.gdl = terms.gdl.item<double>();
  record.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - state.started).count();
  return record;
}

namespace {

void export_adam(const torch::optim::Adam& optimizer, const std::vector<torch::Tensor>& params,
                 const std::string& prefix, nets::Checkpoint& checkpoint) {
  const auto& states = optimizer.state();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = states.find(params[i].unsafeGetTensorImpl());
    if (it == states.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    const std::string key = prefix + "/" + std::to_string(i);
    checkpoint.tensors.emplace_back(key + "/step", torch::tensor(s.step(), torch::kInt64));
    checkpoint.tensors.emplace_back(key + "/exp_avg", s.exp_avg().clone());
    checkpoint.tensors.emplace_back(key + "/exp_avg_sq", s.exp_avg_sq().clone());
  }
}

void import_adam(torch::optim::Adam& optimizer, const std::vector<torch::Tensor>& params,
                 const std::string& prefix, const nets::Checkpoint& checkpoint) {
  auto& states = optimizer.state();
  states.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string key = prefix + "/" + std::to_string(i);
    if (!checkpoint.contains(key + "/step")) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(checkpoint.tensor(key + "/step").item<std::int64_t>());
    s->exp_avg(checkpoint.tensor(key + "/exp_avg").clone());
    s->exp_avg_sq(checkpoint.tensor(key + "/exp_avg_sq").clone());
    if (!s->exp_avg().sizes().equals(params[i].sizes())) {
      throw CheckpointError("optimizer moment shape mismatch for " + key);
    }
    states[params[i].unsafeGetTensorImpl()] = std::move(s);
  }
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& state, const PairSampler& sampler,
                     const TrainConfig& config) {
  nets::Checkpoint checkpoint;
  checkpoint.meta = {{"kind", "train_state"},
                     {"generator_spec", config.generator},
                     {"critic_spec", config.critic},
                     {"config", config},
                     {"iteration", state.iteration},
                     {"epoch", state.epoch},
                     {"critic_updates", state.critic_updates},
                     {"generator_updates", state.generator_updates},
                     {"sampler", sampler.state()}};
  nets::export_module(*state.generator, "generator", checkpoint);
  nets::export_module(*state.critic, "critic", checkpoint);
  export_adam(*state.generator_opt, state.generator->parameters(), "opt/generator", checkpoint);
  export_adam(*state.critic_opt, state.critic->parameters(), "opt/critic", checkpoint);
  nets::write_checkpoint(path, checkpoint);
}

ResumedRun load_checkpoint(const fs::path& path) {
  const auto checkpoint = nets::read_checkpoint(path);
  try {
    auto config = checkpoint.meta.at("config").get<TrainConfig>();
    TrainState state(config);
    nets::import_module(*state.generator, "generator", checkpoint);
    nets::import_module(*state.critic, "critic", checkpoint);
    import_adam(*state.generator_opt, state.generator->parameters(), "opt/generator", checkpoint);
    import_adam(*state.critic_opt, state.critic->parameters(), "opt/critic", checkpoint);
    state.iteration = checkpoint.meta.at("iteration").get<std::int64_t>();
    state.epoch = checkpoint.meta.at("epoch").get<std::int64_t>();
    state.critic_updates = checkpoint.meta.at("critic_updates").get<std::int64_t>();
    state.generator_updates = checkpoint.meta.at("generator_updates").get<std::int64_t>();
    return {std::move(config), std::move(state), checkpoint.meta.at("sampler")};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint metadata incomplete: " + std::string(e.what()));
  }
}

double evaluate_l1(nets::UNetGenerator& generator, PairSampler& data, int batch_size) {
  torch::NoGradGuard no_grad;
  const bool was_training = generator->is_training();
  generator->eval();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<ImageTensor> clean;
    std::vector<ImageTensor> distorted;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) {
      auto pair = data.pair(i);
      clean.push_back(std::move(pair.clean));
      distorted.push_back(std::move(pair.distorted));
    }
    const auto c = nets::to_batch(clean);
    const auto out = generator->forward(nets::to_batch(distorted));
    total += (c - out).abs().sum().item<double>();
    count += static_cast<std::size_t>(c.numel());
  }
  generator->train(was_training);
  return total / static_cast<double>(count);
}

std::int64_t total_iterations(const TrainConfig& config, std::size_t train_size) {
  if (config.max_iterations > 0) return config.max_iterations;
  return static_cast<std::int64_t>(config.epochs) *
         static_cast<std::int64_t>(train_size / static_cast<std::size_t>(config.batch_size));
}

TrainResult train(const pairgen::DatasetManifest& manifest, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  auto entries = manifest.select(pairgen::Split::kTrain);
  if (entries.empty()) throw DatasetError("manifest has no train entries");
  if (entries.size() < static_cast<std::size_t>(config.batch_size)) {
    throw DatasetError("dataset has " + std::to_string(entries.size()) +
                       " training pairs, fewer than one batch of " +
                       std::to_string(config.batch_size) + "; reduce batch_size");
  }
  const std::size_t train_size = entries.size();
  PairSampler sampler(std::move(entries), {config.image_size, config.image_size},
                      config.batch_size, derive_seed(config.seed, 3), config.workers);

  std::optional<TrainState> state;
  if (options.resume) {
    auto resumed = load_checkpoint(*options.resume);
    if (resumed.config.generator != config.generator || resumed.config.critic != config.critic ||
        resumed.config.batch_size != config.batch_size || resumed.config.seed != config.seed) {
      throw ConfigError("resume checkpoint was trained with a different architecture, "
                        "batch size or seed");
    }
    sampler.restore(resumed.sampler_state);
    state.emplace(std::move(resumed.state));
    // Optimizer hyperparameters follow the current config.
    for (auto* opt : {state->generator_opt.get(), state->critic_opt.get()}) {
      for (auto& group : opt->param_groups()) {
        auto& o = static_cast<torch::optim::AdamOptions&>(group.options());
        o.lr(config.learning_rate).betas({config.adam_beta1, config.adam_beta2});
      }
    }
  } else {
    state.emplace(config);
  }
  state->started = std::chrono::steady_clock::now();

  fs::create_directories(options.out_dir);
  std::ofstream log(options.out_dir / "metrics.jsonl", options.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("cannot open metrics log in " + options.out_dir.string());

  TrainResult result{std::move(*state), {}, {}};
  const std::int64_t target = total_iterations(config, train_size);
  while (result.state.iteration < target) {
    auto record = train_iteration(result.state, sampler, config);
    log << nlohmann::json(record).dump() << '\n';
    log.flush();
    if (!options.quiet) {
      std::cerr << "iter " << record.iteration << " epoch " << record.epoch << " critic "
                << record.critic_loss << " gen " << record.gen_loss << " l1 " << record.l1
                << " gdl " << record.gdl << " gp " << record.gp << '\n';
    }
    result.records.push_back(record);
    if (config.checkpoint_every > 0 && result.state.iteration % config.checkpoint_every == 0 &&
        result.state.iteration < target) {
      auto path = options.out_dir / ("ckpt-" + std::to_string(result.state.iteration) + ".ugan");
      save_checkpoint(path, result.state, sampler, config);
      result.checkpoints.push_back(std::move(path));
    }
  }
  auto final_path = options.out_dir / "final.ugan";
  save_checkpoint(final_path, result.state, sampler, config);
  result.checkpoints.push_back(std::move(final_path));
  return result;
}

}  // namespace ugan::trainer
