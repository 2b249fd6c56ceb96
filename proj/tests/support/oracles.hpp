#pragma once

#include <algorithm>
#include <cmath>

#include "tag2pix/image.hpp"
#include "tag2pix/lineart.hpp"

namespace t2p_test {

using tag2pix::Image;
using tag2pix::XdogParams;

/// Direct 2-D convolution with an explicitly built 2-D Gaussian and mirror
/// indices, no separability.
inline Image brute_force_blur(const Image& in, double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  auto mirror = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
  };
  double norm = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) norm += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
  Image out(in.width, in.height, 1);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double w = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / norm;
          acc += w * in.at(mirror(x + dx, in.width), mirror(y + dy, in.height));
        }
      out.at(x, y) = static_cast<float>(acc);
    }
  return out;
}

inline Image brute_force_xdog(const Image& gray, const XdogParams& p) {
  const auto a = brute_force_blur(gray, p.sigma);
  const auto b = brute_force_blur(gray, p.k * p.sigma);
  Image out(gray.width, gray.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double d = a.data[i] - p.tau * b.data[i];
    const double v = d >= p.eps ? 1.0 : 1.0 + std::tanh(p.phi * (d - p.eps));
    out.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

}  // namespace t2p_test
