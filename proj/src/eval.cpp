#include "tag2pix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tag2pix/lineart.hpp"

namespace tag2pix {
namespace {

constexpr double kEigenClip = -1e-6;

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < kEigenClip)
      throw EvalError(std::string("frechet_distance: ") + what +
                      " is not positive semidefinite");
    ev[i] = std::sqrt(std::max(0.0, ev[i]));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Tr((A B)^{1/2}) via the symmetric product sqrt(A) B sqrt(A).
double trace_sqrt_product(const Eigen::MatrixXd& sqrt_a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd m = sqrt_a * b * sqrt_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  double t = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double l = es.eigenvalues()[i];
    if (l < kEigenClip)
      throw EvalError("frechet_distance: covariance product is not PSD");
    t += std::sqrt(std::max(0.0, l));
  }
  return t;
}

void check_aligned(const std::vector<Image>& generated, const std::vector<SpriteSpec>& specs,
                   const std::vector<LabelMap>& masks) {
  if (generated.size() != masks.size() || generated.size() != specs.size())
    throw EvalError("metric: images, specs and masks must have equal counts (missing masks?)");
  for (std::size_t i = 0; i < generated.size(); ++i) {
    if (generated[i].channels != 3)
      throw EvalError("metric: generated images must be RGB");
    if (generated[i].width != masks[i].width || generated[i].height != masks[i].height)
      throw EvalError("metric: mask " + std::to_string(i) + " does not match its image");
  }
}

std::size_t require_cvt(const TagVocabulary& vocab, const std::string& tag) {
  const auto i = vocab.index_of(TagKind::cvt, tag);
  if (!i) throw UnknownTagError(tag);
  return *i;
}

}  // namespace

Image preprocess_for(const Image& image, const FeatureExtractor& extractor) {
  Image x = image;
  if (extractor.input_channels() == 1 && x.channels == 3) x = grayscale(x);
  if (extractor.input_channels() == 3 && x.channels == 1) {
    Image rgb(x.width, x.height, 3);
    for (std::size_t i = 0; i < x.pixel_count(); ++i)
      for (int c = 0; c < 3; ++c) rgb.data[i * 3 + c] = x.data[i];
    x = std::move(rgb);
  }
  const int s = extractor.input_size();
  return resize_bilinear(x, s, s);
}

FeatureStats feature_stats(std::vector<std::vector<double>> features) {
  if (features.size() < 2) throw EvalError("feature_stats: need at least 2 samples");
  const auto d = features.front().size();
  for (const auto& f : features)
    if (f.size() != d) throw EvalError("feature_stats: inconsistent feature length");
  std::sort(features.begin(), features.end());
  const auto n = features.size();
  FeatureStats s;
  s.n = n;
  s.mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (const auto& f : features)
    s.mu += Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(d));
  s.mu /= static_cast<double>(n);
  s.sigma = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (const auto& f : features) {
    const Eigen::VectorXd c =
        Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(d)) - s.mu;
    s.sigma.noalias() += c * c.transpose();
  }
  s.sigma /= static_cast<double>(n - 1);
  return s;
}

FeatureStats feature_stats(const std::vector<Image>& images, FeatureExtractor& extractor) {
  if (images.size() < 2) throw EvalError("feature_stats: need at least 2 images");
  std::vector<Image> pre;
  pre.reserve(images.size());
  for (const auto& im : images) pre.push_back(preprocess_for(im, extractor));
  return feature_stats(extractor.extract(pre));
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.mu.size() != b.mu.size() || a.sigma.rows() != a.mu.size() ||
      b.sigma.rows() != b.mu.size() || a.sigma.cols() != a.sigma.rows() ||
      b.sigma.cols() != b.sigma.rows())
    throw EvalError("frechet_distance: dimension mismatch");
  const Eigen::MatrixXd sa = psd_sqrt(a.sigma, "sigma_a");
  const Eigen::MatrixXd sb = psd_sqrt(b.sigma, "sigma_b");
  const double cross = 0.5 * (trace_sqrt_product(sa, b.sigma) + trace_sqrt_product(sb, a.sigma));
  const double mean_term = (a.mu - b.mu).squaredNorm();
  const double d = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

std::vector<Image> load_png_dir(const std::filesystem::path& dir, int channels) {
  if (!std::filesystem::is_directory(dir))
    throw EvalError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  for (const auto& f : files) out.push_back(read_png(f, channels));
  return out;
}

double fid_toy(const std::vector<Image>& generated, const std::vector<Image>& reference,
               FeatureExtractor& extractor) {
  if (generated.size() < 2 || reference.size() < 2)
    throw EvalError("fid_toy: both sets need at least 2 images");
  return frechet_distance(feature_stats(generated, extractor),
                          feature_stats(reference, extractor));
}

double fid_toy(const std::filesystem::path& generated_dir,
               const std::filesystem::path& reference_dir, FeatureExtractor& extractor) {
  const auto g = load_png_dir(generated_dir, 3);
  const auto r = load_png_dir(reference_dir, 3);
  if (g.empty()) throw EvalError("fid_toy: no PNG images in " + generated_dir.string());
  if (r.empty()) throw EvalError("fid_toy: no PNG images in " + reference_dir.string());
  return fid_toy(g, r, extractor);
}

std::size_t nearest_color(const TagVocabulary& vocab,
                          const std::vector<std::size_t>& candidates, const double rgb[3]) {
  if (candidates.empty()) throw EvalError("nearest_color: no candidates");
  std::size_t best = candidates.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (auto idx : candidates) {
    const auto& c = vocab.cvt(idx).rgb;
    const double d = (rgb[0] - c.r) * (rgb[0] - c.r) + (rgb[1] - c.g) * (rgb[1] - c.g) +
                     (rgb[2] - c.b) * (rgb[2] - c.b);
    if (d < best_d || (d == best_d && idx < best)) {
      best = idx;
      best_d = d;
    }
  }
  return best;
}

double tag_fidelity(const std::vector<Image>& generated, const std::vector<SpriteSpec>& specs,
                    const std::vector<LabelMap>& masks, const TagVocabulary& vocab) {
  check_aligned(generated, specs, masks);
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    for (auto cat : kColorCategories) {
      const auto mean = masked_mean(generated[i], masks[i],
                                    static_cast<std::uint8_t>(region_for(cat)));
      if (mean.empty()) continue;
      const auto want = require_cvt(vocab, specs[i].color_for(cat));
      const double rgb[3] = {mean[0], mean[1], mean[2]};
      hits += nearest_color(vocab, vocab.category_members(cat), rgb) == want;
      ++total;
    }
  }
  if (total == 0) throw EvalError("tag_fidelity: no colored regions");
  return static_cast<double>(hits) / static_cast<double>(total);
}

double color_bleed(const std::vector<Image>& generated, const std::vector<LabelMap>& masks,
                   const TagVocabulary& vocab, const std::vector<SpriteSpec>& specs) {
  check_aligned(generated, specs, masks);
  std::vector<std::size_t> all(vocab.cvt_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto eyes = static_cast<std::uint8_t>(Region::eyes);
  const auto garment = static_cast<std::uint8_t>(Region::garment);
  std::size_t bled = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const auto hair = require_cvt(vocab, specs[i].hair_color);
    const auto& im = generated[i];
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x) {
        const auto l = masks[i].at(x, y);
        if (l != eyes && l != garment) continue;
        const double rgb[3] = {im.at(x, y, 0), im.at(x, y, 1), im.at(x, y, 2)};
        bled += nearest_color(vocab, all, rgb) == hair;
        ++total;
      }
  }
  if (total == 0) throw EvalError("color_bleed: no eye or garment pixels");
  return static_cast<double>(bled) / static_cast<double>(total);
}

std::string EvalReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"kind", r.kind},
                        {"seed", r.seed},
                        {"fid_toy", r.fid_toy},
                        {"tag_fidelity", r.tag_fidelity},
                        {"color_bleed", r.color_bleed},
                        {"params", r.params},
                        {"checkpoint", r.checkpoint},
                        {"best_epoch", r.best_epoch},
                        {"schedule_hash", r.schedule_hash}};
    if (!r.error.empty()) j["error"] = r.error;
    rows_json.push_back(std::move(j));
  }
  return nlohmann::json{{"columns", {"kind", "fid_toy", "tag_fidelity", "color_bleed", "params"}},
                        {"rows", rows_json}}
             .dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << std::left << std::setw(14) << "kind" << std::right << std::setw(12) << "fid_toy"
      << std::setw(14) << "tag_fidelity" << std::setw(13) << "color_bleed" << std::setw(10)
      << "params" << "\n";
  out << std::fixed;
  for (const auto& r : rows) {
    out << std::left << std::setw(14) << r.kind << std::right;
    if (!r.error.empty()) {
      out << "  failed: " << r.error << "\n";
      continue;
    }
    out << std::setw(12) << std::setprecision(4) << r.fid_toy << std::setw(14)
        << std::setprecision(4) << r.tag_fidelity << std::setw(13) << std::setprecision(4)
        << r.color_bleed << std::setw(10) << r.params << "\n";
  }
  return out.str();
}

void EvalReport::validate() const {
  std::set<std::pair<std::string, std::uint64_t>> keys;
  for (const auto& r : rows) {
    if (!keys.emplace(r.kind, r.seed).second)
      throw EvalError("EvalReport: duplicate row for " + r.kind);
    if (!r.error.empty()) continue;
    if (!std::isfinite(r.fid_toy) || !std::isfinite(r.tag_fidelity) ||
        !std::isfinite(r.color_bleed))
      throw EvalError("EvalReport: non-finite metric for " + r.kind);
  }
}

}  // namespace tag2pix
