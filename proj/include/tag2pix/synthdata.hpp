#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tag2pix/image.hpp"
#include "tag2pix/tagspace.hpp"

namespace tag2pix {

/// Mask labels. Ink strokes drawn on region borders carry `background`.
enum class Region : std::uint8_t {
  background = 0,
  hair = 1,
  eyes = 2,
  garment = 3,
  skin = 4,
};
inline constexpr int kRegionCount = 5;

inline constexpr Rgb kSkinRgb{1.0, 0.87, 0.77};
inline constexpr Rgb kInkRgb{0.10, 0.08, 0.10};

/// Region colored by a CVT category.
Region region_for(ColorCategory c);

struct SpriteSpec {
  std::string hair_color;
  std::string eye_color;
  std::string garment_color;
  std::set<std::string> cit_attrs;
  std::uint64_t geometry_seed = 0;

  std::set<std::string> color_tags() const {
    return {hair_color, eye_color, garment_color};
  }
  const std::string& color_for(ColorCategory c) const;
  bool has(const std::string& cit) const { return cit_attrs.contains(cit); }
  friend bool operator==(const SpriteSpec&, const SpriteSpec&) = default;
};

struct SampleRecord {
  Image line_art;     ///< 1 channel, white background
  Image color_image;  ///< 3 channels
  TagVector cvt;
  TagVector cit;
  LabelMap masks;
  SpriteSpec spec;
};

struct RenderedSprite {
  Image color_image;
  LabelMap masks;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic in `seed`; colors uniform within each category, each CIT
/// included independently with probability 1/2.
SpriteSpec sample_spec(std::uint64_t seed, const TagVocabulary& vocab);

bool supported_sprite_size(int size);

/// Layered flat-fill character sprite. `size` must be 64, 128 or 256.
RenderedSprite render_sprite(const SpriteSpec& spec, const TagVocabulary& vocab,
                             int size);

/// Full record with the line art extracted by the sprite-default XDoG preset.
SampleRecord make_record(const SpriteSpec& spec, const TagVocabulary& vocab,
                         int size);

struct ManifestEntry {
  std::string id;
  bool test = false;
  std::string image;  ///< paths relative to the dataset directory
  std::string mask;
  std::string line;
  std::string tags;
};

struct DatasetManifest {
  static constexpr int kVersion = 1;
  static constexpr const char* kFormat = "tag2pix-dataset";

  int version = kVersion;
  bool valid = true;
  std::size_t n = 0;
  int size = 0;
  std::uint64_t seed = 0;
  std::string vocab_hash;
  std::vector<ManifestEntry> entries;

  std::size_t train_count() const;
  std::size_t test_count() const;

  std::string to_json() const;
  /// Rejects unknown format names and versions.
  static DatasetManifest from_json(const std::string& text);
};

/// Indices of the test split: the n/10 indices with the smallest
/// hash(seed, index).
std::vector<bool> test_split(std::size_t n, std::uint64_t seed);

/// Writes `n` sprites plus `manifest.json` and `vocab.txt` into `out_dir`.
/// On failure the manifest is written with `valid = false` before rethrowing.
DatasetManifest build_dataset(std::size_t n, int size, std::uint64_t seed,
                              const TagVocabulary& vocab,
                              const std::filesystem::path& out_dir);

std::string format_tags_file(const SpriteSpec& spec);
SpriteSpec parse_tags_file(const std::string& text);

/// In-memory dataset. Line arts are the stored reference extraction;
/// trainers re-extract jittered variants from `color_image`.
struct Dataset {
  TagVocabulary vocab;
  DatasetManifest manifest;
  std::vector<SampleRecord> records;

  std::vector<std::size_t> indices(bool test) const;
  int image_size() const { return manifest.size; }

  /// Loads the dataset at `dir`, refusing a vocabulary whose hash differs
  /// from `expected` (when given) or from the manifest.
  static Dataset load(const std::filesystem::path& dir,
                      const TagVocabulary* expected = nullptr);

  /// Builds records in memory without touching the filesystem; same records
  /// as build_dataset would write.
  static Dataset synthesize(std::size_t n, int size, std::uint64_t seed,
                            const TagVocabulary& vocab);
};

}  // namespace tag2pix
