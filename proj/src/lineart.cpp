#include "tag2pix/lineart.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tag2pix {

void XdogParams::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("xdog: sigma must be > 0");
  if (!(k > 1.0)) throw std::invalid_argument("xdog: k must be > 1");
  if (!(phi > 0.0)) throw std::invalid_argument("xdog: phi must be > 0");
  if (!std::isfinite(tau) || !std::isfinite(eps))
    throw std::invalid_argument("xdog: tau and eps must be finite");
}

XdogParams sprite_default_xdog(int image_size) {
  XdogParams p;
  p.sigma = 0.8 * (image_size / 256.0);
  return p;
}

XdogParams xdog_preset(std::string_view name, int image_size) {
  if (name == "sprite-default") return sprite_default_xdog(image_size);
  throw std::invalid_argument("unknown xdog preset '" + std::string(name) + "'");
}

XdogParams jitter_xdog(const XdogParams& base, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> factor(0.9, 1.1);
  XdogParams p = base;
  p.sigma = base.sigma * factor(rng);
  p.tau = std::min(base.tau * factor(rng), 1.0 - 2.0 * base.eps);
  return p;
}

Image grayscale(const Image& color) {
  if (color.channels == 1) return color;
  if (color.channels != 3)
    throw std::invalid_argument("grayscale: expected 1 or 3 channels");
  Image out(color.width, color.height, 1);
  for (std::size_t i = 0; i < color.pixel_count(); ++i) {
    const float* p = &color.data[i * 3];
    out.data[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    taps[i + radius] = w;
    sum += w;
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Image gaussian_blur(const Image& gray, double sigma) {
  if (gray.channels != 1)
    throw std::invalid_argument("gaussian_blur: expected 1 channel");
  const auto taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  const int w = gray.width;
  const int h = gray.height;

  std::vector<double> rows(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t)
        acc += taps[t + radius] * gray.at(reflect_index(x + t, w), y);
      rows[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  Image out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t)
        acc += taps[t + radius] *
               rows[static_cast<std::size_t>(reflect_index(y + t, h)) * w + x];
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

Image xdog(const Image& gray, const XdogParams& params) {
  params.validate();
  if (gray.channels != 1) throw std::invalid_argument("xdog: expected 1 channel");
  const Image inner = gaussian_blur(gray, params.sigma);
  const Image outer = gaussian_blur(gray, params.sigma * params.k);
  Image out(gray.width, gray.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double d = static_cast<double>(inner.data[i]) -
                     params.tau * static_cast<double>(outer.data[i]);
    const double v =
        d >= params.eps ? 1.0 : 1.0 + std::tanh(params.phi * (d - params.eps));
    out.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

Image brightness_scale(const Image& line_art, double factor) {
  if (!(factor >= 1.0))
    throw std::invalid_argument("brightness_scale: factor must be >= 1");
  Image out = line_art;
  for (auto& v : out.data)
    v = static_cast<float>(std::min(1.0, static_cast<double>(v) * factor));
  return out;
}

}  // namespace tag2pix
