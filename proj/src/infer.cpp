#include "ugan/infer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>

#include "ugan/checkpoint.hpp"
#include "ugan/error.hpp"
#include "ugan/random.hpp"

namespace fs = std::filesystem;

namespace ugan::infer {

LoadedGenerator load_generator(const fs::path& checkpoint_path) {
  const auto checkpoint = nets::read_checkpoint(checkpoint_path);
  nets::GeneratorSpec spec;
  std::int64_t iteration = 0;
  try {
    spec = checkpoint.meta.at("generator_spec").get<nets::GeneratorSpec>();
    iteration = checkpoint.meta.value("iteration", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint lacks a generator spec: " + std::string(e.what()));
  }
  nets::UNetGenerator generator(spec);
  nets::import_module(*generator, "generator", checkpoint);
  generator->eval();
  return {std::move(spec), std::move(generator), iteration};
}

void save_generator(const fs::path& path, const nets::UNetGenerator& generator,
                    std::int64_t iteration) {
  nets::Checkpoint checkpoint;
  checkpoint.meta = {{"kind", "generator"},
                     {"generator_spec", generator->spec()},
                     {"iteration", iteration}};
  nets::export_module(*generator, "generator", checkpoint);
  nets::write_checkpoint(path, checkpoint);
}

ImageTensor restore_image(LoadedGenerator& model, const ImageTensor& image) {
  torch::NoGradGuard no_grad;
  const int size = model.spec.image_size;
  const auto input = resize_bilinear(image, {size, size});
  const auto out = nets::forward_generator(model.generator, nets::to_tensor(input).unsqueeze(0));
  return nets::from_batch(out, 0);
}

RestoreResult restore(const fs::path& checkpoint, const std::vector<fs::path>& inputs,
                      const fs::path& output_dir, const RestoreOptions& options) {
  auto model = load_generator(checkpoint);
  fs::create_directories(output_dir);
  RestoreResult result;
  for (const auto& input : inputs) {
    ImageTensor source;
    try {
      source = load_image_native(input);
    } catch (const Error& e) {
      result.failures.push_back(input.string() + ": " + e.what());
      continue;
    }
    auto restored = restore_image(model, source);
    if (options.resize_to_source) restored = resize_bilinear(restored, source.size());
    auto target = output_dir / (input.stem().string() + ".png");
    save_image(target, restored);
    result.written.push_back(std::move(target));
  }
  return result;
}

BenchmarkResult benchmark(LoadedGenerator& model, int trials, const std::string& device_label) {
  if (trials < 10) throw UsageError("benchmark needs at least 10 trials");
  const auto device = resolve_device(device_label);
  torch::NoGradGuard no_grad;
  const int size = model.spec.image_size;
  Rng rng(7);
  ImageTensor image(size, size);
  for (float& v : image.data()) v = static_cast<float>(rng.uniform() * 2.0 - 1.0);
  const auto input = nets::to_tensor(image).unsqueeze(0);

  (void)model.generator->forward(input);  // warm-up, excluded
  using clock = std::chrono::steady_clock;
  double total = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto start = clock::now();
    const auto out = model.generator->forward(input);
    (void)out.data_ptr();
    total += std::chrono::duration<double>(clock::now() - start).count();
  }
  BenchmarkResult result;
  result.trials = trials;
  result.image_size = size;
  result.device = device;
  result.mean_seconds_per_image = total / trials;
  result.fps = 1.0 / result.mean_seconds_per_image;
  return result;
}

BenchmarkResult benchmark(const fs::path& checkpoint, int trials, const std::string& device_label) {
  if (trials < 10) throw UsageError("benchmark needs at least 10 trials");
  auto model = load_generator(checkpoint);
  return benchmark(model, trials, device_label);
}

std::string resolve_device(const std::string& requested) {
  std::string label = requested;
  if (label.empty()) {
    const char* env = std::getenv("UGAN_DEVICE");
    label = env != nullptr && *env != '\0' ? env : "auto";
  }
  std::transform(label.begin(), label.end(), label.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (label == "auto" || label == "cpu") return "cpu";
  throw Error("compute device '" + label + "' is not available in this build (cpu only)");
}

}  // namespace ugan::infer
