#include "ugan/image_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ugan/error.hpp"

namespace fs = std::filesystem;

namespace ugan {

ImageTensor::ImageTensor(int height, int width, float fill)
    : height_(height),
      width_(width),
      data_(static_cast<std::size_t>(height) * width * kChannels, fill) {
  if (height <= 0 || width <= 0) {
    throw DimensionError("image dimensions must be positive");
  }
}

ImageTensor::ImageTensor(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height <= 0 || width <= 0) {
    throw DimensionError("image dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(height) * width * kChannels) {
    throw DimensionError("image data size does not match " + std::to_string(height) + "x" +
                         std::to_string(width) + "x3");
  }
}

bool ImageTensor::in_range() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return v >= -1.0f && v <= 1.0f; });
}

float normalize_value(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

std::uint8_t denormalize_value(float v) {
  const float scaled = std::round((v + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

ImageTensor normalize(const Pixels8& pixels) {
  std::vector<float> data(pixels.data.size());
  std::transform(pixels.data.begin(), pixels.data.end(), data.begin(), normalize_value);
  return ImageTensor(pixels.height, pixels.width, std::move(data));
}

Pixels8 denormalize(const ImageTensor& image) {
  Pixels8 out{image.height(), image.width(), {}};
  out.data.resize(image.numel());
  std::transform(image.data().begin(), image.data().end(), out.data.begin(),
                 denormalize_value);
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& image, Size target) {
  if (target.height <= 0 || target.width <= 0) {
    throw DimensionError("resize target must be positive");
  }
  if (image.size() == target) return image;
  // cv::Mat header over const data; cv::resize never writes to its source.
  const cv::Mat src(image.height(), image.width(), CV_32FC3,
                    const_cast<float*>(image.data().data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(target.width, target.height), 0.0, 0.0, cv::INTER_LINEAR);
  std::vector<float> data(dst.ptr<float>(), dst.ptr<float>() + dst.total() * 3);
  for (float& v : data) v = std::clamp(v, -1.0f, 1.0f);
  return ImageTensor(target.height, target.width, std::move(data));
}

ImageTensor crop(const ImageTensor& image, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height <= 0 || width <= 0 || top + height > image.height() ||
      left + width > image.width()) {
    throw DimensionError("crop rectangle (" + std::to_string(top) + ", " +
                         std::to_string(left) + ", " + std::to_string(height) + ", " +
                         std::to_string(width) + ") outside " +
                         std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
  ImageTensor out(height, width);
  for (int r = 0; r < height; ++r) {
    const auto row = image.data().subspan(
        (static_cast<std::size_t>(top + r) * image.width() + left) * 3,
        static_cast<std::size_t>(width) * 3);
    std::copy(row.begin(), row.end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(r) * width * 3);
  }
  return out;
}

namespace {

enum class Codec { kPng, kJpeg, kUnknown };

Codec sniff(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<unsigned char, 8> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  const auto got = in.gcount();
  static constexpr std::array<unsigned char, 8> kPngMagic{0x89, 'P', 'N', 'G',
                                                          '\r', '\n', 0x1a, '\n'};
  if (got == 8 && head == kPngMagic) return Codec::kPng;
  if (got >= 3 && head[0] == 0xff && head[1] == 0xd8 && head[2] == 0xff) return Codec::kJpeg;
  return Codec::kUnknown;
}

std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

bool is_image_extension(const fs::path& path) {
  const auto ext = lower_ext(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Pixels8 read_pixels(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw NotFoundError("image not found: " + path.string());
  }
  if (sniff(path) == Codec::kUnknown) {
    throw FormatError("not a PNG or JPEG file: " + path.string());
  }
  // IMREAD_COLOR replicates gray rasters, drops alpha and reduces 16-bit to 8-bit.
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw FormatError("could not decode image: " + path.string());
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Pixels8 out{rgb.rows, rgb.cols, {}};
  out.data.resize(rgb.total() * 3);
  for (int r = 0; r < rgb.rows; ++r) {
    const auto* src = rgb.ptr<std::uint8_t>(r);
    std::copy(src, src + static_cast<std::ptrdiff_t>(rgb.cols) * 3,
              out.data.begin() + static_cast<std::ptrdiff_t>(r) * rgb.cols * 3);
  }
  return out;
}

void write_pixels(const fs::path& path, const Pixels8& pixels) {
  if (!is_image_extension(path)) {
    throw FormatError("unsupported output extension (expected .png/.jpg/.jpeg): " +
                      path.string());
  }
  if (pixels.data.size() != static_cast<std::size_t>(pixels.height) * pixels.width * 3) {
    throw DimensionError("pixel buffer does not match its dimensions");
  }
  const cv::Mat rgb(pixels.height, pixels.width, CV_8UC3,
                    const_cast<std::uint8_t*>(pixels.data.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<int> params;
  if (lower_ext(path) == ".png") params = {cv::IMWRITE_PNG_COMPRESSION, 3};
  if (!cv::imwrite(path.string(), bgr, params)) {
    throw Error("failed to write image: " + path.string());
  }
}

ImageTensor load_image_native(const fs::path& path) { return normalize(read_pixels(path)); }

ImageTensor load_image(const fs::path& path, Size target) {
  if (target.height <= 0 || target.width <= 0) {
    throw DimensionError("target size must be positive");
  }
  return resize_bilinear(load_image_native(path), target);
}

void save_image(const fs::path& path, const ImageTensor& image) {
  write_pixels(path, denormalize(image));
}

}  // namespace ugan
