#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ugan/nets.hpp"

namespace ugan::infer {

struct LoadedGenerator {
  nets::GeneratorSpec spec;
  nets::UNetGenerator generator;
  std::int64_t iteration = 0;
};

// Generator in evaluation mode. Throws CheckpointError for foreign or
// corrupt files.
LoadedGenerator load_generator(const std::filesystem::path& checkpoint);

// Writes a generator-only checkpoint (used for debug presets and exports).
void save_generator(const std::filesystem::path& path, const nets::UNetGenerator& generator,
                    std::int64_t iteration = 0);

ImageTensor restore_image(LoadedGenerator& model, const ImageTensor& image);

struct RestoreOptions {
  bool resize_to_source = false;
};

struct RestoreResult {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> failures;  // "path: reason" for skipped inputs
};

// Each input is resized to the model resolution, restored and written to
// output_dir/<stem>.png. Undecodable inputs are reported and skipped.
RestoreResult restore(const std::filesystem::path& checkpoint,
                      const std::vector<std::filesystem::path>& inputs,
                      const std::filesystem::path& output_dir, const RestoreOptions& options = {});

struct BenchmarkResult {
  double mean_seconds_per_image = 0.0;
  double fps = 0.0;
  int trials = 0;
  int image_size = 0;
  std::string device;
};

// Times single-image forward passes after one excluded warm-up pass.
// trials must be >= 10.
BenchmarkResult benchmark(const std::filesystem::path& checkpoint, int trials,
                          const std::string& device_label);
BenchmarkResult benchmark(LoadedGenerator& model, int trials, const std::string& device_label);

// Device label from UGAN_DEVICE, "auto" when unset. Only CPU execution is
// built in; "auto" resolves to "cpu".
std::string resolve_device(const std::string& requested);

}  // namespace ugan::infer
