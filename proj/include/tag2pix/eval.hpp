#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tag2pix/image.hpp"
#include "tag2pix/synthdata.hpp"
#include "tag2pix/tagspace.hpp"

namespace tag2pix {

class EvalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Gaussian fit of a feature distribution (covariance uses n - 1).
struct FeatureStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::size_t n = 0;
};

/// Maps preprocessed images to feature vectors. Implementations must be
/// deterministic (inference mode).
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int input_size() const = 0;
  virtual int input_channels() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<std::vector<double>> extract(const std::vector<Image>& images) = 0;
};

/// Resize to the extractor's square input and convert channels (RGB to
/// luminance for 1-channel extractors).
Image preprocess_for(const Image& image, const FeatureExtractor& extractor);

/// Rows are sorted lexicographically first, so the result does not depend on
/// the order of the inputs. Throws EvalError for fewer than 2 rows.
FeatureStats feature_stats(std::vector<std::vector<double>> features);
FeatureStats feature_stats(const std::vector<Image>& images, FeatureExtractor& extractor);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The trace of the
/// square root is taken from the eigenvalues of sqrt(S_a) S_b sqrt(S_a)
/// (and the swapped product, averaged, so the value is exactly symmetric).
/// Eigenvalues above -1e-6 are clipped to 0; anything more negative is
/// rejected as non-PSD.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

/// All PNGs directly inside `dir`, sorted by file name.
std::vector<Image> load_png_dir(const std::filesystem::path& dir, int channels);

/// Fréchet distance between feature fits of two PNG directories.
double fid_toy(const std::filesystem::path& generated_dir,
               const std::filesystem::path& reference_dir, FeatureExtractor& extractor);
double fid_toy(const std::vector<Image>& generated, const std::vector<Image>& reference,
               FeatureExtractor& extractor);

/// Index of the canonical color nearest (Euclidean RGB) to `rgb` among
/// `candidates`; ties go to the lowest vocabulary index.
std::size_t nearest_color(const TagVocabulary& vocab,
                          const std::vector<std::size_t>& candidates,
                          const double rgb[3]);

/// Fraction of (image, colored region) pairs whose mean color is nearest,
/// within the region's category, to the requested CVT color.
double tag_fidelity(const std::vector<Image>& generated,
                    const std::vector<SpriteSpec>& specs,
                    const std::vector<LabelMap>& masks, const TagVocabulary& vocab);

/// Fraction of eye and garment pixels whose nearest canonical color (whole
/// CVT table) is the requested hair color.
double color_bleed(const std::vector<Image>& generated, const std::vector<LabelMap>& masks,
                   const TagVocabulary& vocab, const std::vector<SpriteSpec>& specs);

struct EvalRow {
  std::string kind;
  std::uint64_t seed = 0;
  double fid_toy = 0.0;
  double tag_fidelity = 0.0;
  double color_bleed = 0.0;
  std::int64_t params = 0;
  std::string checkpoint;
  int best_epoch = 0;
  std::string schedule_hash;
  std::string error;  ///< non-empty when the arm failed
};

/// Ablation / comparison table. Columns: kind, fid_toy, tag_fidelity,
/// color_bleed, params.
struct EvalReport {
  std::vector<EvalRow> rows;

  std::string to_json() const;
  std::string to_table() const;
  /// Throws EvalError on duplicate (kind, seed) or non-finite metrics in
  /// successful rows.
  void validate() const;
};

}  // namespace tag2pix
