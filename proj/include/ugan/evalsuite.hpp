#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <tuple>
#include <string>
#include <vector>

#include "ugan/image_io.hpp"

namespace ugan::eval {

// Hysteresis thresholds on the Sobel gradient magnitude of the [0, 1] gray
// image, expressed as fractions of the image's largest magnitude.
struct CannyThresholds {
  double low = 0.1;
  double high = 0.2;

  void validate() const;
};

// Gaussian smoothing used before differentiation.
inline constexpr double kCannySigma = 1.4;

struct EdgeMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // 0 or 1, row-major

  std::uint8_t at(int row, int col) const {
    return data[static_cast<std::size_t>(row) * width + col];
  }
  std::size_t count() const;
};

// Gray conversion (Rec. 601 luma), Gaussian blur, Sobel gradients,
// non-maximum suppression and 8-connected double-threshold hysteresis.
EdgeMap canny_edges(const ImageTensor& image, const CannyThresholds& thresholds = {});

enum class EdgeDistance { kEuclidean, kCount };

// Euclidean: sqrt(#disagreeing pixels). Count: #disagreeing pixels.
double edge_map_distance(const EdgeMap& a, const EdgeMap& b,
                         EdgeDistance kind = EdgeDistance::kEuclidean);
double edge_distance(const ImageTensor& a, const ImageTensor& b,
                     const CannyThresholds& thresholds = {},
                     EdgeDistance kind = EdgeDistance::kEuclidean);

inline constexpr int kPatchSide = 64;

struct PatchSpec {
  std::string label;
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  // Throws DimensionError when the rectangle leaves the image.
  void check_bounds(Size image) const;
};

// "label:top,left,height,width"
PatchSpec parse_patch(const std::string& text);
std::string format_patch(const PatchSpec& patch);

// Rectangle cropped and resized to 64 x 64.
ImageTensor extract_patch(const ImageTensor& image, const PatchSpec& patch);

// Unnormalized GDL (alpha = 1) between the two 64 x 64 patches.
double patch_gdl(const ImageTensor& original, const ImageTensor& generated, const PatchSpec& patch);

struct PatchStats {
  double mean = 0.0;
  double std = 0.0;
};

// Mean and population standard deviation over all pixels and channels of
// the 64 x 64 patch, on [0, 1] intensities.
PatchStats patch_stats(const ImageTensor& image, const PatchSpec& patch);

struct MethodDir {
  std::string label;
  std::filesystem::path dir;
};

struct ReportRecord {
  std::string method;
  std::string image;
  std::string metric;  // edge_distance | patch_gdl | patch_mean | patch_std
  std::string patch;   // empty for whole-image metrics
  double value = 0.0;
};

struct MetricsReport {
  CannyThresholds thresholds;
  EdgeDistance distance = EdgeDistance::kEuclidean;
  std::vector<PatchSpec> patches;
  std::vector<ReportRecord> records;
  std::vector<std::string> warnings;

  // Arithmetic mean of the matching records' values, keyed by
  // (method, metric, patch).
  std::map<std::tuple<std::string, std::string, std::string>, double> means() const;
};

// Compares every method directory against the originals by filename stem.
// Generated images are resized to the original's resolution. Patch
// mean/std rows are also emitted for the originals under method "original".
MetricsReport run_report(const std::filesystem::path& original_dir,
                         const std::vector<MethodDir>& methods,
                         const std::vector<PatchSpec>& patches,
                         const CannyThresholds& thresholds = {},
                         EdgeDistance distance = EdgeDistance::kEuclidean);

// Tab-separated records: a "#ugan-report" header line carrying the
// thresholds and distance kind, a column line, one row per measurement and
// per-method "mean" rows.
std::string format_report(const MetricsReport& report);
MetricsReport parse_report(const std::string& text);

// Fixed-width per-method tables.
std::string format_summary(const MetricsReport& report);

// Writes <out_dir>/report.tsv and <out_dir>/summary.txt.
void write_report(const std::filesystem::path& out_dir, const MetricsReport& report);

}  // namespace ugan::eval
