#include "tag2pix/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tag2pix {
namespace {

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

png_uint_32 format_for(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    default:
      throw ImageIoError("PNG: unsupported channel count " +
                         std::to_string(channels));
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageIoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageIoError("short write to " + path.string());
}

std::vector<std::uint8_t> decode_raw(std::span<const std::uint8_t> bytes,
                                     png_uint_32 format, int& width,
                                     int& height) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw ImageIoError(std::string("PNG decode: ") + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, raw.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ImageIoError(std::string("PNG decode: ") + img.message);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return raw;
}

std::vector<std::uint8_t> encode_raw(const std::uint8_t* raw, int width,
                                     int height, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, raw, 0, nullptr)) {
    throw ImageIoError(std::string("PNG encode: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, raw, 0,
                                 nullptr)) {
    throw ImageIoError(std::string("PNG encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes, int channels) {
  int w = 0;
  int h = 0;
  const auto raw = decode_raw(bytes, format_for(channels), w, h);
  Image out(w, h, channels);
  for (std::size_t i = 0; i < raw.size(); ++i) out.data[i] = raw[i] / 255.0f;
  return out;
}

Image read_png(const std::filesystem::path& path, int channels) {
  const auto bytes = read_file(path);
  try {
    return decode_png(bytes, channels);
  } catch (const ImageIoError& e) {
    throw ImageIoError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  const auto format = format_for(image.channels);
  std::vector<std::uint8_t> raw(image.data.size());
  std::transform(image.data.begin(), image.data.end(), raw.begin(), to_byte);
  return encode_raw(raw.data(), image.width, image.height, format);
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_file(path, encode_png(image));
}

LabelMap read_label_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  int w = 0;
  int h = 0;
  auto raw = decode_raw(bytes, PNG_FORMAT_GRAY, w, h);
  LabelMap out;
  out.width = w;
  out.height = h;
  out.labels = std::move(raw);
  return out;
}

void write_label_png(const std::filesystem::path& path,
                     const LabelMap& labels) {
  write_file(path, encode_raw(labels.labels.data(), labels.width,
                              labels.height, PNG_FORMAT_GRAY));
}

Image resize_bilinear(const Image& src, int width, int height) {
  if (src.width == width && src.height == height) return src;
  Image out(width, height, src.channels);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(x0, y0, c) * (1 - wx) + src.at(x1, y0, c) * wx;
        const double bot = src.at(x0, y1, c) * (1 - wx) + src.at(x1, y1, c) * wx;
        out.at(x, y, c) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Image letterbox_square(const Image& src, float fill) {
  const int side = std::max(src.width, src.height);
  if (src.width == src.height) return src;
  Image out(side, side, src.channels, fill);
  const int ox = (side - src.width) / 2;
  const int oy = (side - src.height) / 2;
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c)
        out.at(x + ox, y + oy, c) = src.at(x, y, c);
  return out;
}

std::vector<double> masked_mean(const Image& image, const LabelMap& labels,
                                std::uint8_t label) {
  if (image.width != labels.width || image.height != labels.height) {
    throw std::invalid_argument("masked_mean: image/mask size mismatch");
  }
  std::vector<double> sum(image.channels, 0.0);
  std::size_t count = 0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (labels.at(x, y) != label) continue;
      ++count;
      for (int c = 0; c < image.channels; ++c) sum[c] += image.at(x, y, c);
    }
  }
  if (count == 0) return {};
  for (auto& s : sum) s /= static_cast<double>(count);
  return sum;
}

}  // namespace tag2pix
