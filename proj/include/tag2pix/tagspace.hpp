#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tag2pix {

enum class TagKind { cvt, cit };

/// Region a color-variant tag applies to.
enum class ColorCategory { hair, eye, garment };

inline constexpr std::array<ColorCategory, 3> kColorCategories{
    ColorCategory::hair, ColorCategory::eye, ColorCategory::garment};

std::string_view to_string(ColorCategory c);
std::optional<ColorCategory> parse_category(std::string_view s);

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct CvtEntry {
  std::string name;
  ColorCategory category = ColorCategory::garment;
  Rgb rgb;
  friend bool operator==(const CvtEntry&, const CvtEntry&) = default;
};

class UnknownTagError : public std::invalid_argument {
 public:
  explicit UnknownTagError(std::string tag)
      : std::invalid_argument("unknown tag: " + tag), tag_(std::move(tag)) {}
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

class VocabularyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Ordered color-variant (CVT) and color-invariant (CIT) tag tables.
///
/// Each CVT carries the region it colors and the canonical RGB used by the
/// sprite renderer and the color metrics. Immutable once constructed.
class TagVocabulary {
 public:
  static constexpr int kFormatVersion = 1;

  TagVocabulary(std::vector<CvtEntry> cvts, std::vector<std::string> cits);

  /// Builds a vocabulary from bare names; the category is inferred from the
  /// suffix (`_hair`, `_eyes`, anything else is garment) and colors are zero.
  static TagVocabulary from_names(const std::vector<std::string>& cvt_names,
                                  const std::vector<std::string>& cit_names);

  /// 12 CVTs (4 hair, 4 eye, 4 garment) and 6 CITs.
  static TagVocabulary desk_default();

  /// Text manifest: `version = 1`, then `[cvt]` lines
  /// `<name> <category> <r> <g> <b>` and `[cit]` lines `<name>`.
  /// `#` starts a comment.
  static TagVocabulary parse(std::string_view text);
  static TagVocabulary load(const std::filesystem::path& path);
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  /// SHA-256 of the canonical serialization.
  const std::string& hash() const { return hash_; }

  std::size_t size(TagKind kind) const {
    return kind == TagKind::cvt ? cvts_.size() : cit_names_.size();
  }
  std::size_t cvt_count() const { return cvts_.size(); }
  std::size_t cit_count() const { return cit_names_.size(); }

  const std::vector<CvtEntry>& cvts() const { return cvts_; }
  const CvtEntry& cvt(std::size_t i) const { return cvts_.at(i); }
  std::vector<std::string> cvt_names() const;
  const std::vector<std::string>& cit_names() const { return cit_names_; }
  const std::string& name(TagKind kind, std::size_t i) const {
    return kind == TagKind::cvt ? cvts_.at(i).name : cit_names_.at(i);
  }

  std::optional<std::size_t> index_of(TagKind kind, std::string_view name) const;

  /// CVT indices belonging to `category`, in vocabulary order.
  std::vector<std::size_t> category_members(ColorCategory category) const;

  friend bool operator==(const TagVocabulary& a, const TagVocabulary& b) {
    return a.cvts_ == b.cvts_ && a.cit_names_ == b.cit_names_;
  }

 private:
  std::vector<CvtEntry> cvts_;
  std::vector<std::string> cit_names_;
  std::unordered_map<std::string, std::size_t> cvt_index_;
  std::unordered_map<std::string, std::size_t> cit_index_;
  std::string hash_;
};

/// Multi-hot encoding over one vocabulary table.
struct TagVector {
  TagKind kind = TagKind::cvt;
  std::vector<std::uint8_t> values;

  std::size_t count() const;
  friend bool operator==(const TagVector&, const TagVector&) = default;
};

/// Throws UnknownTagError naming the first tag absent from the table.
TagVector encode_tags(const std::set<std::string>& tags,
                      const TagVocabulary& vocab, TagKind kind);

/// Throws std::invalid_argument on a length mismatch or non-binary entry.
std::set<std::string> decode_tags(const TagVector& vec,
                                  const TagVocabulary& vocab);

/// Splits "a,b , c" into {"a","b","c"}; empty items are dropped.
std::set<std::string> split_tag_list(std::string_view csv);

}  // namespace tag2pix
