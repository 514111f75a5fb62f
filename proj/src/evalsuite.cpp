#include "ugan/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

#include "ugan/error.hpp"
#include "ugan/losses.hpp"
#include "ugan/pairgen.hpp"

namespace fs = std::filesystem;

namespace ugan::eval {

void CannyThresholds::validate() const {
  if (!(low > 0.0 && low < high)) {
    throw ConfigError("Canny thresholds must satisfy 0 < low < high");
  }
}

std::size_t EdgeMap::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

namespace {

// Mirror index without repeating the edge sample.
int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

}  // namespace

EdgeMap canny_edges(const ImageTensor& image, const CannyThresholds& thresholds) {
  thresholds.validate();
  const int h = image.height();
  const int w = image.width();
  auto idx = [w](int r, int c) { return static_cast<std::size_t>(r) * w + c; };

  std::vector<double> gray(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double red = (image.at(r, c, 0) + 1.0) * 0.5;
      const double green = (image.at(r, c, 1) + 1.0) * 0.5;
      const double blue = (image.at(r, c, 2) + 1.0) * 0.5;
      gray[idx(r, c)] = 0.299 * red + 0.587 * green + 0.114 * blue;
    }
  }

  const auto kernel = gaussian_kernel(kCannySigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(gray.size());
  std::vector<double> smooth(gray.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * gray[idx(r, reflect101(c + k, w))];
      tmp[idx(r, c)] = acc;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp[idx(reflect101(r + k, h), c)];
      smooth[idx(r, c)] = acc;
    }
  }

  std::vector<double> magnitude(gray.size());
  std::vector<std::uint8_t> sector(gray.size());
  for (int r = 0; r < h; ++r) {
    const int up = reflect101(r - 1, h);
    const int down = reflect101(r + 1, h);
    for (int c = 0; c < w; ++c) {
      const int left = reflect101(c - 1, w);
      const int right = reflect101(c + 1, w);
      const double gx = (smooth[idx(up, right)] + 2.0 * smooth[idx(r, right)] + smooth[idx(down, right)]) -
                        (smooth[idx(up, left)] + 2.0 * smooth[idx(r, left)] + smooth[idx(down, left)]);
      const double gy = (smooth[idx(down, left)] + 2.0 * smooth[idx(down, c)] + smooth[idx(down, right)]) -
                        (smooth[idx(up, left)] + 2.0 * smooth[idx(up, c)] + smooth[idx(up, right)]);
      magnitude[idx(r, c)] = std::hypot(gx, gy) / 4.0;
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      // 0: horizontal gradient, 1: 45 degrees, 2: vertical, 3: 135 degrees.
      sector[idx(r, c)] = angle < 22.5 || angle >= 157.5 ? 0 : angle < 67.5 ? 1 : angle < 112.5 ? 2 : 3;
    }
  }
  // Thresholds apply to the magnitude relative to the image's strongest
  // response; an image without gradients has no edges.
  const double peak = *std::max_element(magnitude.begin(), magnitude.end());
  if (peak <= 1e-12) return {h, w, std::vector<std::uint8_t>(gray.size(), 0)};
  for (auto& m : magnitude) m /= peak;

  // Neighbour offsets (dr, dc) along the gradient for each sector.
  static constexpr int kOffsets[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};
  auto mag_at = [&](int r, int c) {
    return r < 0 || r >= h || c < 0 || c >= w ? 0.0 : magnitude[idx(r, c)];
  };
  std::vector<double> thin(gray.size(), 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double m = magnitude[idx(r, c)];
      const auto& off = kOffsets[sector[idx(r, c)]];
      // Strict on one side, inclusive on the other: plateaus of equal
      // magnitude keep exactly one pixel.
      if (m > mag_at(r - off[0], c - off[1]) && m >= mag_at(r + off[0], c + off[1])) {
        thin[idx(r, c)] = m;
      }
    }
  }

  EdgeMap edges{h, w, std::vector<std::uint8_t>(gray.size(), 0)};
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (thin[idx(r, c)] >= thresholds.high && edges.data[idx(r, c)] == 0) {
        edges.data[idx(r, c)] = 1;
        stack.emplace_back(r, c);
        while (!stack.empty()) {
          const auto [pr, pc] = stack.back();
          stack.pop_back();
          for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
              const int nr = pr + dr;
              const int nc = pc + dc;
              if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
              if (edges.data[idx(nr, nc)] == 0 && thin[idx(nr, nc)] >= thresholds.low) {
                edges.data[idx(nr, nc)] = 1;
                stack.emplace_back(nr, nc);
              }
            }
          }
        }
      }
    }
  }
  return edges;
}

double edge_map_distance(const EdgeMap& a, const EdgeMap& b, EdgeDistance kind) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("edge maps differ in shape");
  }
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) differing += a.data[i] != b.data[i] ? 1 : 0;
  const auto count = static_cast<double>(differing);
  return kind == EdgeDistance::kEuclidean ? std::sqrt(count) : count;
}

double edge_distance(const ImageTensor& a, const ImageTensor& b,
                     const CannyThresholds& thresholds, EdgeDistance kind) {
  if (a.size() != b.size()) throw DimensionError("edge_distance: images differ in shape");
  return edge_map_distance(canny_edges(a, thresholds), canny_edges(b, thresholds), kind);
}

void PatchSpec::check_bounds(Size image) const {
  if (top < 0 || left < 0 || height <= 0 || width <= 0 || top + height > image.height ||
      left + width > image.width) {
    throw DimensionError("patch '" + label + "' (" + std::to_string(top) + ", " +
                         std::to_string(left) + ", " + std::to_string(height) + ", " +
                         std::to_string(width) + ") is outside the " +
                         std::to_string(image.height) + "x" + std::to_string(image.width) +
                         " image");
  }
}

PatchSpec parse_patch(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0) {
    throw ConfigError("patch must look like label:top,left,height,width (got '" + text + "')");
  }
  PatchSpec patch;
  patch.label = text.substr(0, colon);
  std::istringstream in(text.substr(colon + 1));
  char c1 = 0;
  char c2 = 0;
  char c3 = 0;
  in >> patch.top >> c1 >> patch.left >> c2 >> patch.height >> c3 >> patch.width;
  if (!in || c1 != ',' || c2 != ',' || c3 != ',' || !(in >> std::ws).eof()) {
    throw ConfigError("patch must look like label:top,left,height,width (got '" + text + "')");
  }
  if (patch.height <= 0 || patch.width <= 0 || patch.top < 0 || patch.left < 0) {
    throw ConfigError("patch '" + patch.label + "' needs a non-negative origin and positive size");
  }
  return patch;
}

std::string format_patch(const PatchSpec& p) {
  return p.label + ":" + std::to_string(p.top) + "," + std::to_string(p.left) + "," +
         std::to_string(p.height) + "," + std::to_string(p.width);
}

ImageTensor extract_patch(const ImageTensor& image, const PatchSpec& patch) {
  patch.check_bounds(image.size());
  return resize_bilinear(crop(image, patch.top, patch.left, patch.height, patch.width),
                         {kPatchSide, kPatchSide});
}

double patch_gdl(const ImageTensor& original, const ImageTensor& generated, const PatchSpec& patch) {
  if (original.size() != generated.size()) {
    throw DimensionError("patch_gdl: images differ in shape");
  }
  return losses::gdl_sum(extract_patch(original, patch), extract_patch(generated, patch), 1);
}

PatchStats patch_stats(const ImageTensor& image, const PatchSpec& patch) {
  const auto region = extract_patch(image, patch);
  const auto values = region.data();
  double sum = 0.0;
  for (const float v : values) sum += (v + 1.0) * 0.5;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (const float v : values) {
    const double d = (v + 1.0) * 0.5 - mean;
    sq += d * d;
  }
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

std::map<std::tuple<std::string, std::string, std::string>, double> MetricsReport::means() const {
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    auto& slot = acc[{r.method, r.metric, r.patch}];
    slot.first += r.value;
    ++slot.second;
  }
  std::map<std::tuple<std::string, std::string, std::string>, double> out;
  for (const auto& [key, slot] : acc) out[key] = slot.first / static_cast<double>(slot.second);
  return out;
}

MetricsReport run_report(const fs::path& original_dir, const std::vector<MethodDir>& methods,
                         const std::vector<PatchSpec>& patches, const CannyThresholds& thresholds,
                         EdgeDistance distance) {
  thresholds.validate();
  MetricsReport report;
  report.thresholds = thresholds;
  report.distance = distance;
  report.patches = patches;

  std::map<std::string, fs::path> originals;
  for (const auto& path : pairgen::list_images(original_dir)) {
    if (!originals.emplace(path.stem().string(), path).second) {
      report.warnings.push_back("duplicate stem in originals: " + path.string());
    }
  }
  if (originals.empty()) throw DatasetError("no images in " + original_dir.string());

  std::map<std::string, ImageTensor> original_images;
  std::map<std::string, EdgeMap> original_edges;
  for (const auto& [stem, path] : originals) {
    try {
      auto image = load_image_native(path);
      for (const auto& patch : patches) patch.check_bounds(image.size());
      original_edges.emplace(stem, canny_edges(image, thresholds));
      original_images.emplace(stem, std::move(image));
    } catch (const NotFoundError& e) {
      report.warnings.push_back(std::string("skipping original: ") + e.what());
    } catch (const FormatError& e) {
      report.warnings.push_back(std::string("skipping original: ") + e.what());
    }
  }

  for (const auto& [stem, image] : original_images) {
    for (const auto& patch : patches) {
      const auto stats = patch_stats(image, patch);
      report.records.push_back({"original", stem, "patch_mean", patch.label, stats.mean});
      report.records.push_back({"original", stem, "patch_std", patch.label, stats.std});
    }
  }

  for (const auto& method : methods) {
    std::map<std::string, fs::path> generated;
    for (const auto& path : pairgen::list_images(method.dir)) {
      generated.emplace(path.stem().string(), path);
      if (!originals.contains(path.stem().string())) {
        report.warnings.push_back(method.label + ": no original for " + path.string());
      }
    }
    for (const auto& [stem, image] : original_images) {
      const auto it = generated.find(stem);
      if (it == generated.end()) {
        report.warnings.push_back(method.label + ": missing output for " + stem);
        continue;
      }
      ImageTensor output;
      try {
        output = resize_bilinear(load_image_native(it->second), image.size());
      } catch (const Error& e) {
        report.warnings.push_back(method.label + ": skipping " + it->second.string() + ": " + e.what());
        continue;
      }
      report.records.push_back(
          {method.label, stem, "edge_distance", "",
           edge_map_distance(original_edges.at(stem), canny_edges(output, thresholds), distance)});
      for (const auto& patch : patches) {
        report.records.push_back({method.label, stem, "patch_gdl", patch.label,
                                  patch_gdl(image, output, patch)});
        const auto stats = patch_stats(output, patch);
        report.records.push_back({method.label, stem, "patch_mean", patch.label, stats.mean});
        report.records.push_back({method.label, stem, "patch_std", patch.label, stats.std});
      }
    }
  }
  return report;
}

namespace {

constexpr const char* kReportHeader = "#ugan-report";
constexpr const char* kMeanImage = "<mean>";

std::string distance_name(EdgeDistance d) {
  return d == EdgeDistance::kEuclidean ? "euclidean" : "count";
}

std::string format_value(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    parts.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return parts;
}

}  // namespace

std::string format_report(const MetricsReport& report) {
  std::ostringstream out;
  out << kReportHeader << "\tlow=" << format_value(report.thresholds.low)
      << "\thigh=" << format_value(report.thresholds.high)
      << "\tdistance=" << distance_name(report.distance) << '\n';
  out << "method\timage\tmetric\tpatch\tvalue\n";
  auto patch_field = [](const std::string& p) { return p.empty() ? std::string("-") : p; };
  for (const auto& r : report.records) {
    out << r.method << '\t' << r.image << '\t' << r.metric << '\t' << patch_field(r.patch) << '\t'
        << format_value(r.value) << '\n';
  }
  for (const auto& [key, value] : report.means()) {
    const auto& [method, metric, patch] = key;
    out << method << '\t' << kMeanImage << '\t' << metric << '\t' << patch_field(patch) << '\t'
        << format_value(value) << '\n';
  }
  return out.str();
}

MetricsReport parse_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  MetricsReport report;
  if (!std::getline(in, line) || line.rfind(kReportHeader, 0) != 0) {
    throw FormatError("missing report header");
  }
  for (const auto& field : split_tabs(line)) {
    if (field.rfind("low=", 0) == 0) report.thresholds.low = std::stod(field.substr(4));
    if (field.rfind("high=", 0) == 0) report.thresholds.high = std::stod(field.substr(5));
    if (field.rfind("distance=", 0) == 0) {
      report.distance = field.substr(9) == "count" ? EdgeDistance::kCount : EdgeDistance::kEuclidean;
    }
  }
  std::getline(in, line);  // column names
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 5) throw FormatError("report row needs 5 fields: " + line);
    if (f[1] == kMeanImage) continue;
    report.records.push_back({f[0], f[1], f[2], f[3] == "-" ? "" : f[3], std::stod(f[4])});
  }
  return report;
}

std::string format_summary(const MetricsReport& report) {
  std::ostringstream out;
  out << "Canny thresholds: low=" << report.thresholds.low << " high=" << report.thresholds.high
      << ", sigma=" << kCannySigma << ", distance=" << distance_name(report.distance) << '\n';

  std::vector<std::string> methods;
  std::set<std::string> images;
  for (const auto& r : report.records) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
    images.insert(r.image);
  }
  std::map<std::tuple<std::string, std::string, std::string, std::string>, double> cell;
  for (const auto& r : report.records) cell[{r.metric, r.patch, r.image, r.method}] = r.value;
  const auto means = report.means();

  auto table = [&](const std::string& title, const std::string& metric, const std::string& patch) {
    std::vector<std::string> cols;
    for (const auto& m : methods) {
      if (means.contains({m, metric, patch})) cols.push_back(m);
    }
    if (cols.empty()) return;
    out << '\n' << title << '\n' << std::left << std::setw(24) << "image";
    for (const auto& m : cols) out << std::right << std::setw(14) << m;
    out << '\n';
    for (const auto& image : images) {
      bool any = false;
      for (const auto& m : cols) any = any || cell.contains({metric, patch, image, m});
      if (!any) continue;
      out << std::left << std::setw(24) << image;
      for (const auto& m : cols) {
        const auto it = cell.find({metric, patch, image, m});
        out << std::right << std::setw(14);
        if (it == cell.end()) {
          out << "-";
        } else {
          out << std::fixed << std::setprecision(4) << it->second << std::defaultfloat;
        }
      }
      out << '\n';
    }
    out << std::left << std::setw(24) << "Mean";
    for (const auto& m : cols) {
      out << std::right << std::setw(14) << std::fixed << std::setprecision(4)
          << means.at({m, metric, patch}) << std::defaultfloat;
    }
    out << '\n';
  };

  table("Edge-map distance", "edge_distance", "");
  for (const auto& patch : report.patches) {
    table("Patch GDL [" + patch.label + "]", "patch_gdl", patch.label);
    table("Patch mean [" + patch.label + "]", "patch_mean", patch.label);
    table("Patch std [" + patch.label + "]", "patch_std", patch.label);
  }
  if (!report.warnings.empty()) {
    out << "\nWarnings:\n";
    for (const auto& w : report.warnings) out << "  " << w << '\n';
  }
  return out.str();
}

void write_report(const fs::path& out_dir, const MetricsReport& report) {
  fs::create_directories(out_dir);
  std::ofstream tsv(out_dir / "report.tsv", std::ios::binary | std::ios::trunc);
  std::ofstream summary(out_dir / "summary.txt", std::ios::binary | std::ios::trunc);
  if (!tsv || !summary) throw Error("cannot write report into " + out_dir.string());
  tsv << format_report(report);
  summary << format_summary(report);
}

}  // namespace ugan::eval
