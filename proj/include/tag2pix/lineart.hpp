#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tag2pix/image.hpp"

namespace tag2pix {

/// Extended difference-of-Gaussians parameters.
struct XdogParams {
  double sigma = 0.8;  ///< inner blur radius in pixels
  double k = 1.6;      ///< outer/inner blur ratio, > 1
  double tau = 0.95;   ///< weight of the outer blur
  double eps = 0.01;   ///< threshold in luminance units
  double phi = 150.0;  ///< soft-threshold sharpness

  /// Throws std::invalid_argument unless sigma > 0, k > 1, phi > 0.
  void validate() const;
};

/// Named preset "sprite-default" scaled to the image size.
XdogParams sprite_default_xdog(int image_size);

/// Looks up a preset by name; throws std::invalid_argument for unknown names.
XdogParams xdog_preset(std::string_view name, int image_size);

/// Per-sample style jitter: sigma and tau are scaled by independent factors
/// in [0.9, 1.1]; tau is then capped at 1 - 2*eps so a white background stays
/// white.
XdogParams jitter_xdog(const XdogParams& base, std::mt19937_64& rng);

/// Luminance 0.299 R + 0.587 G + 0.114 B. Accepts 1- or 3-channel input.
Image grayscale(const Image& color);

/// Normalized Gaussian taps for radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Maps an out-of-range index into [0, n) by mirror reflection without
/// repeating the edge sample (… 2 1 | 0 1 2 … n-1 | n-2 …).
int reflect_index(int i, int n);

/// Separable Gaussian blur with reflect padding on a single-channel image.
Image gaussian_blur(const Image& gray, double sigma);

/// Soft-thresholded DoG line drawing; output in [0,1], dark strokes on white.
Image xdog(const Image& gray, const XdogParams& params);

/// v -> min(1, v * factor). Throws std::invalid_argument for factor < 1.
Image brightness_scale(const Image& line_art, double factor);

/// Factor applied to hand-drawn sketches before inference: the mean of the
/// U(1, 7) range the fine-tune step trains on.
inline constexpr double kRealSketchBrightness = 4.0;

}  // namespace tag2pix
