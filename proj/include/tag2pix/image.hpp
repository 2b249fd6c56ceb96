#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tag2pix {

/// Dense float image in row-major HWC order. Values are nominally in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || c <= 0) {
      throw std::invalid_argument("Image: dimensions must be positive");
    }
  }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool same_extent(const Image& o) const {
    return width == o.width && height == o.height;
  }
};

/// Per-pixel region labels. Stored on disk as a single-channel 8-bit PNG
/// whose gray values are the label indices themselves.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
};

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// PNG codecs. Channels 1 (gray) and 3 (RGB) are supported on write; any
// decodable PNG can be read and is converted to the requested channel count.
Image read_png(const std::filesystem::path& path, int channels);
Image decode_png(std::span<const std::uint8_t> bytes, int channels);
void write_png(const std::filesystem::path& path, const Image& image);
std::vector<std::uint8_t> encode_png(const Image& image);

LabelMap read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const LabelMap& labels);

/// Bilinear resize (half-pixel centers, edge clamp).
Image resize_bilinear(const Image& src, int width, int height);

/// Pads the shorter side with `fill` so the image becomes square, keeping the
/// content centered.
Image letterbox_square(const Image& src, float fill);

/// Mean of each channel over the pixels where `labels == label`; returns an
/// empty vector when no pixel carries the label.
std::vector<double> masked_mean(const Image& image, const LabelMap& labels,
                                std::uint8_t label);

}  // namespace tag2pix
