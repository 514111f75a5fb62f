#include "ugan/pairgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "ugan/error.hpp"
#include "ugan/random.hpp"

namespace fs = std::filesystem;

namespace ugan::pairgen {

ImagePair::ImagePair(ImageTensor clean_image, ImageTensor distorted_image)
    : clean(std::move(clean_image)), distorted(std::move(distorted_image)) {
  if (clean.size() != distorted.size()) {
    throw DimensionError("clean and distorted images differ in shape");
  }
}

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  throw FormatError("unknown split tag '" + text + "'");
}

std::vector<ManifestEntry> DatasetManifest::select(Split split) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [split](const ManifestEntry& e) { return e.split == split; });
  return out;
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [split](const ManifestEntry& e) { return e.split == split; }));
}

void DatasetManifest::validate(bool check_files) const {
  std::set<fs::path> seen;
  for (const auto& entry : entries) {
    if (!seen.insert(entry.clean).second) {
      throw DatasetError("clean path listed twice in manifest: " + entry.clean.string());
    }
    if (check_files) {
      for (const auto& path : {entry.clean, entry.distorted}) {
        if (!fs::exists(path)) throw DatasetError("manifest path does not exist: " + path.string());
      }
    }
  }
}

namespace {

constexpr const char* kManifestHeader = "#ugan-manifest";

std::vector<std::string> split_on(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(line);
  while (std::getline(in, part, sep)) parts.push_back(part);
  if (!line.empty() && line.back() == sep) parts.emplace_back();
  return parts;
}

std::string trim(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = text.find_last_not_of(" \t\r");
  return text.substr(first, last - first + 1);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

std::string serialize_manifest(const DatasetManifest& manifest) {
  std::ostringstream out;
  out << kManifestHeader << "\tseed=" << manifest.seed << '\n';
  for (const auto& entry : manifest.entries) {
    out << entry.clean.string() << '\t' << entry.distorted.string() << '\t'
        << to_string(entry.split) << '\n';
  }
  return out.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_on(line, '\t');
  if (header.size() != 2 || header[0] != kManifestHeader || header[1].rfind("seed=", 0) != 0) {
    throw FormatError("bad manifest header: " + line);
  }
  DatasetManifest manifest;
  try {
    manifest.seed = std::stoull(header[1].substr(5));
  } catch (const std::exception&) {
    throw FormatError("bad manifest seed: " + header[1]);
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_on(line, '\t');
    if (fields.size() != 3) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected 3 fields");
    }
    manifest.entries.push_back({fields[0], fields[1], parse_split(fields[2])});
  }
  manifest.validate(false);
  return manifest;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << serialize_manifest(manifest);
}

DatasetManifest read_manifest(const fs::path& path) { return parse_manifest(read_text(path)); }

std::vector<fs::path> list_images(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw NotFoundError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (item.is_regular_file() && is_image_extension(item.path())) files.push_back(item.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

namespace {

std::map<std::string, fs::path> index_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> by_stem;
  for (const auto& file : list_images(dir)) {
    const auto stem = file.stem().string();
    if (auto [it, inserted] = by_stem.emplace(stem, file); !inserted) {
      throw DatasetError("ambiguous stem '" + stem + "' in " + dir.string() + ": " +
                         it->second.filename().string() + " and " + file.filename().string());
    }
  }
  return by_stem;
}

}  // namespace

IngestResult ingest_external_pairs(const fs::path& clean_dir, const fs::path& distorted_dir) {
  const auto clean = index_by_stem(clean_dir);
  const auto distorted = index_by_stem(distorted_dir);
  IngestResult result;
  for (const auto& [stem, path] : clean) {
    if (auto it = distorted.find(stem); it != distorted.end()) {
      result.manifest.entries.push_back({path, it->second, Split::kTrain});
    } else {
      result.warnings.push_back("no distorted counterpart for " + path.string());
    }
  }
  for (const auto& [stem, path] : distorted) {
    if (!clean.contains(stem)) {
      result.warnings.push_back("no clean counterpart for " + path.string());
    }
  }
  if (result.manifest.entries.empty()) {
    throw DatasetError("no matching pairs between " + clean_dir.string() + " and " +
                       distorted_dir.string());
  }
  return result;
}

std::size_t test_count(std::size_t n, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DatasetError("test fraction must lie in (0, 1)");
  }
  if (n == 0) throw DatasetError("cannot split an empty manifest");
  // std::llround rounds halves away from zero.
  const auto wanted = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  return std::min(wanted, n - 1);
}

DatasetManifest build_split(const DatasetManifest& manifest, double test_fraction,
                            std::uint64_t seed) {
  const std::size_t n = manifest.entries.size();
  const std::size_t n_test = test_count(n, test_fraction);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  DatasetManifest out = manifest;
  out.seed = seed;
  for (std::size_t k = 0; k < n; ++k) {
    out.entries[order[k]].split = k < n_test ? Split::kTest : Split::kTrain;
  }
  return out;
}

void DistortionParams::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(red_attenuation)) throw ConfigError("red_attenuation must lie in [0, 1]");
  if (!in_unit(haze_strength)) throw ConfigError("haze_strength must lie in [0, 1]");
  for (const double c : haze_color) {
    if (!(c >= -1.0 && c <= 1.0)) throw ConfigError("haze_color components must lie in [-1, 1]");
  }
  if (!(blur_radius >= 0.0) || !std::isfinite(blur_radius)) {
    throw ConfigError("blur_radius must be non-negative");
  }
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
    throw ConfigError("noise_std must be non-negative");
  }
}

DistortionParams DistortionParams::underwater_preset() {
  DistortionParams p;
  p.red_attenuation = 0.45;
  p.haze_color = {-0.6, 0.1, 0.3};
  p.haze_strength = 0.35;
  p.blur_radius = 1.5;
  p.noise_std = 0.1;
  return p;
}

DistortionParams parse_distortion_params(const std::string& text) {
  DistortionParams params;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("params line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto number = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || trim(s.substr(used)) != "") {
        throw ConfigError("params line " + std::to_string(line_no) + ": '" + s +
                          "' is not a number");
      }
      return v;
    };
    if (key == "red_attenuation") {
      params.red_attenuation = number(value);
    } else if (key == "haze_strength") {
      params.haze_strength = number(value);
    } else if (key == "blur_radius") {
      params.blur_radius = number(value);
    } else if (key == "noise_std") {
      params.noise_std = number(value);
    } else if (key == "haze_color") {
      const auto parts = split_on(value, ',');
      if (parts.size() != 3) throw ConfigError("haze_color needs three comma-separated values");
      for (int c = 0; c < 3; ++c) params.haze_color[c] = number(trim(parts[c]));
    } else {
      throw ConfigError("unknown distortion key '" + key + "'");
    }
  }
  params.validate();
  return params;
}

DistortionParams load_distortion_params(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw ConfigError("params file not found: " + path.string());
  return parse_distortion_params(read_text(path));
}

std::string format_distortion_params(const DistortionParams& p) {
  std::ostringstream out;
  out.precision(17);
  out << "red_attenuation = " << p.red_attenuation << '\n'
      << "haze_color = " << p.haze_color[0] << ", " << p.haze_color[1] << ", " << p.haze_color[2]
      << '\n'
      << "haze_strength = " << p.haze_strength << '\n'
      << "blur_radius = " << p.blur_radius << '\n'
      << "noise_std = " << p.noise_std << '\n';
  return out.str();
}

ImageTensor synth_distort(const ImageTensor& clean, const DistortionParams& params,
                          std::uint64_t seed) {
  params.validate();
  ImageTensor out = clean;
  auto data = out.data();
  const auto attenuation = static_cast<float>(params.red_attenuation);
  for (std::size_t i = 0; attenuation != 1.0f && i < data.size(); i += 3) {
    const float intensity = (data[i] + 1.0f) * 0.5f;
    data[i] = intensity * attenuation * 2.0f - 1.0f;
  }
  if (params.blur_radius > 0.0) {
    const cv::Mat src(out.height(), out.width(), CV_32FC3, data.data());
    cv::Mat blurred;
    cv::GaussianBlur(src, blurred, cv::Size(0, 0), params.blur_radius, params.blur_radius,
                     cv::BORDER_REFLECT_101);
    std::copy(blurred.ptr<float>(), blurred.ptr<float>() + data.size(), data.begin());
  }
  const auto strength = static_cast<float>(params.haze_strength);
  Rng rng(seed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    float v = data[i];
    if (strength > 0.0f) {
      v = v * (1.0f - strength) + static_cast<float>(params.haze_color[i % 3]) * strength;
    }
    if (params.noise_std > 0.0) v += static_cast<float>(params.noise_std * rng.normal());
    data[i] = std::clamp(v, -1.0f, 1.0f);
  }
  return out;
}

std::uint64_t file_seed(std::uint64_t seed, const std::string& stem) {
  return derive_seed(seed, hash_string(stem));
}

std::vector<fs::path> synth_distort_directory(const fs::path& in_dir, const fs::path& out_dir,
                                              const DistortionParams& params, std::uint64_t seed) {
  params.validate();
  const auto inputs = list_images(in_dir);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  written.reserve(inputs.size());
  for (const auto& input : inputs) {
    const auto stem = input.stem().string();
    const auto distorted = synth_distort(load_image_native(input), params, file_seed(seed, stem));
    auto target = out_dir / (stem + ".png");
    save_image(target, distorted);
    written.push_back(std::move(target));
  }
  return written;
}

ImageTensor synthetic_scene(Size size, std::uint64_t seed) {
  Rng rng(seed);
  auto color = [&rng] {
    std::array<float, 3> c{};
    for (auto& v : c) v = static_cast<float>(rng.uniform() * 2.0 - 1.0);
    return c;
  };
  ImageTensor image(size.height, size.width);
  const auto top = color();
  const auto bottom = color();
  for (int r = 0; r < size.height; ++r) {
    const float t = size.height > 1 ? static_cast<float>(r) / (size.height - 1) : 0.0f;
    for (int c = 0; c < size.width; ++c) {
      for (int ch = 0; ch < 3; ++ch) image.at(r, c, ch) = top[ch] * (1 - t) + bottom[ch] * t;
    }
  }
  const int rects = 2 + static_cast<int>(rng.below(3));
  for (int k = 0; k < rects; ++k) {
    const int h = 4 + static_cast<int>(rng.below(std::max(1, size.height / 2)));
    const int w = 4 + static_cast<int>(rng.below(std::max(1, size.width / 2)));
    const int r0 = static_cast<int>(rng.below(std::max(1, size.height - h + 1)));
    const int c0 = static_cast<int>(rng.below(std::max(1, size.width - w + 1)));
    const auto fill = color();
    for (int r = r0; r < std::min(size.height, r0 + h); ++r) {
      for (int c = c0; c < std::min(size.width, c0 + w); ++c) {
        for (int ch = 0; ch < 3; ++ch) image.at(r, c, ch) = fill[ch];
      }
    }
  }
  const int discs = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < discs; ++k) {
    const double cy = rng.uniform() * size.height;
    const double cx = rng.uniform() * size.width;
    const double radius = 3.0 + rng.uniform() * std::min(size.height, size.width) / 4.0;
    const auto fill = color();
    for (int r = 0; r < size.height; ++r) {
      for (int c = 0; c < size.width; ++c) {
        const double dy = r + 0.5 - cy;
        const double dx = c + 0.5 - cx;
        if (dy * dy + dx * dx <= radius * radius) {
          for (int ch = 0; ch < 3; ++ch) image.at(r, c, ch) = fill[ch];
        }
      }
    }
  }
  // A band of stripes gives the scene fine texture.
  const int period = 4 + static_cast<int>(rng.below(5));
  const int band = static_cast<int>(rng.below(std::max(1, size.height - size.height / 4)));
  const auto stripe = color();
  for (int r = band; r < std::min(size.height, band + size.height / 8 + 1); ++r) {
    for (int c = 0; c < size.width; ++c) {
      if ((c / period) % 2 == 0) {
        for (int ch = 0; ch < 3; ++ch) image.at(r, c, ch) = stripe[ch];
      }
    }
  }
  return image;
}

}  // namespace ugan::pairgen
