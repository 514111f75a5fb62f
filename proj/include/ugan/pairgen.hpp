#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ugan/image_io.hpp"

namespace ugan::pairgen {

// Aligned (clean, distorted) training pair.
struct ImagePair {
  ImagePair(ImageTensor clean_image, ImageTensor distorted_image);

  ImageTensor clean;
  ImageTensor distorted;
};

enum class Split { kTrain, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::filesystem::path clean;
  std::filesystem::path distorted;
  Split split = Split::kTrain;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;

  std::vector<ManifestEntry> select(Split split) const;
  std::size_t count(Split split) const;

  // Throws DatasetError on duplicate clean paths; with check_files, also on
  // paths that do not exist.
  void validate(bool check_files) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// Line format: a header "#ugan-manifest\tseed=<n>", then one
// "clean<TAB>distorted<TAB>train|test" line per entry.
std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct IngestResult {
  DatasetManifest manifest;
  std::vector<std::string> warnings;
};

// Pairs files whose stems match between the two directories. Entries are
// ordered by stem and tagged train. Throws DatasetError when nothing
// matches ("no matching pairs") or a stem occurs twice in one directory.
IngestResult ingest_external_pairs(const std::filesystem::path& clean_dir,
                                   const std::filesystem::path& distorted_dir);

// Number of test entries for n entries: round half away from zero, capped at
// n - 1 so the train split keeps at least one entry.
std::size_t test_count(std::size_t n, double test_fraction);

// Reassigns split tags by a seeded shuffle; entry order is preserved.
DatasetManifest build_split(const DatasetManifest& manifest, double test_fraction,
                            std::uint64_t seed);

// Parametric stand-in for a learned clean -> underwater distortion.
struct DistortionParams {
  double red_attenuation = 1.0;  // survival of red intensity, [0, 1]
  std::array<double, 3> haze_color{0.0, 0.0, 0.0};  // [-1, 1] per channel
  double haze_strength = 0.0;    // [0, 1]
  double blur_radius = 0.0;      // Gaussian sigma in pixels
  double noise_std = 0.0;        // normalized intensity units

  void validate() const;

  // Blue-green cast with scattering blur and sensor noise, used by the
  // desk-scale corpus.
  static DistortionParams underwater_preset();
};

// key = value lines; keys are the field names above, haze_color takes
// three comma-separated values. '#' starts a comment.
DistortionParams parse_distortion_params(const std::string& text);
DistortionParams load_distortion_params(const std::filesystem::path& path);
std::string format_distortion_params(const DistortionParams& params);

// clip(blur(attenuate_red(clean)) * (1 - h) + haze_color * h + noise, -1, 1).
// Red attenuation scales physical intensity (v + 1) / 2, not the signed value.
ImageTensor synth_distort(const ImageTensor& clean, const DistortionParams& params,
                          std::uint64_t seed);

// Seed used for a file when distorting a directory; depends only on the
// base seed and the file stem.
std::uint64_t file_seed(std::uint64_t seed, const std::string& stem);

// Distorts every PNG/JPEG in in_dir into out_dir as <stem>.png. Returns the
// written paths in stem order.
std::vector<std::filesystem::path> synth_distort_directory(
    const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
    const DistortionParams& params, std::uint64_t seed);

// Procedural clean scene (gradient background, rectangles, discs, stripes)
// for desk-scale corpora and tests.
ImageTensor synthetic_scene(Size size, std::uint64_t seed);

// Lists PNG/JPEG files of a directory sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace ugan::pairgen
