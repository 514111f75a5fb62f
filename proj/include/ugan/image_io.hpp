#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace ugan {

struct Size {
  int height = 256;
  int width = 256;

  friend bool operator==(const Size&, const Size&) = default;
};

// H x W x 3 image, row-major, channels interleaved in RGB order.
// Values are normalized intensities in [-1, 1].
class ImageTensor {
 public:
  static constexpr int kChannels = 3;

  ImageTensor() = default;
  ImageTensor(int height, int width, float fill = 0.0f);
  ImageTensor(int height, int width, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  Size size() const { return {height_, width_}; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int row, int col, int channel) {
    return data_[index(row, col, channel)];
  }
  float at(int row, int col, int channel) const {
    return data_[index(row, col, channel)];
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  // True when every element lies in [-1, 1].
  bool in_range() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int row, int col, int channel) const {
    return (static_cast<std::size_t>(row) * width_ + col) * kChannels + channel;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// 8-bit RGB raster, same layout as ImageTensor.
struct Pixels8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  friend bool operator==(const Pixels8&, const Pixels8&) = default;
};

// v -> v / 127.5 - 1
ImageTensor normalize(const Pixels8& pixels);
float normalize_value(std::uint8_t v);

// v -> round((v + 1) * 127.5), clipped to [0, 255]
Pixels8 denormalize(const ImageTensor& image);
std::uint8_t denormalize_value(float v);

// Bilinear resampling (half-pixel centers). Returns a copy when the size
// already matches.
ImageTensor resize_bilinear(const ImageTensor& image, Size target);

// Crops rows [top, top + height) and columns [left, left + width).
ImageTensor crop(const ImageTensor& image, int top, int left, int height, int width);

// Decodes a PNG or JPEG file into 8-bit RGB. Grayscale rasters are
// replicated into three channels; an alpha channel is dropped.
Pixels8 read_pixels(const std::filesystem::path& path);

// Encodes as PNG or JPEG, chosen by extension.
void write_pixels(const std::filesystem::path& path, const Pixels8& pixels);

ImageTensor load_image(const std::filesystem::path& path, Size target = {});

// Loads at the file's native resolution.
ImageTensor load_image_native(const std::filesystem::path& path);

void save_image(const std::filesystem::path& path, const ImageTensor& image);

// Extensions accepted by the loader (lowercase, with dot).
bool is_image_extension(const std::filesystem::path& path);

}  // namespace ugan
