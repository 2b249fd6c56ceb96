#include "tag2pix/tagspace.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tag2pix/digest.hpp"

namespace tag2pix {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_tag_name(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-';
  });
}

ColorCategory infer_category(std::string_view name) {
  if (name.ends_with("_hair")) return ColorCategory::hair;
  if (name.ends_with("_eyes")) return ColorCategory::eye;
  return ColorCategory::garment;
}

}  // namespace

std::string_view to_string(ColorCategory c) {
  switch (c) {
    case ColorCategory::hair: return "hair";
    case ColorCategory::eye: return "eye";
    case ColorCategory::garment: return "garment";
  }
  return "garment";
}

std::optional<ColorCategory> parse_category(std::string_view s) {
  for (auto c : kColorCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

TagVocabulary::TagVocabulary(std::vector<CvtEntry> cvts,
                             std::vector<std::string> cits)
    : cvts_(std::move(cvts)), cit_names_(std::move(cits)) {
  for (std::size_t i = 0; i < cvts_.size(); ++i) {
    const auto& n = cvts_[i].name;
    if (!valid_tag_name(n)) throw VocabularyError("invalid tag name '" + n + "'");
    if (!cvt_index_.emplace(n, i).second)
      throw VocabularyError("duplicate cvt tag '" + n + "'");
  }
  for (std::size_t i = 0; i < cit_names_.size(); ++i) {
    const auto& n = cit_names_[i];
    if (!valid_tag_name(n)) throw VocabularyError("invalid tag name '" + n + "'");
    if (cvt_index_.contains(n))
      throw VocabularyError("tag '" + n + "' is both cvt and cit");
    if (!cit_index_.emplace(n, i).second)
      throw VocabularyError("duplicate cit tag '" + n + "'");
  }
  hash_ = sha256_hex(serialize());
}

TagVocabulary TagVocabulary::from_names(
    const std::vector<std::string>& cvt_names,
    const std::vector<std::string>& cit_names) {
  std::vector<CvtEntry> cvts;
  cvts.reserve(cvt_names.size());
  for (const auto& n : cvt_names) cvts.push_back({n, infer_category(n), {}});
  return TagVocabulary(std::move(cvts), cit_names);
}

TagVocabulary TagVocabulary::desk_default() {
  using C = ColorCategory;
  return TagVocabulary(
      {
          {"blue_hair", C::hair, {0.20, 0.30, 0.90}},
          {"blonde_hair", C::hair, {0.95, 0.85, 0.40}},
          {"pink_hair", C::hair, {0.95, 0.55, 0.75}},
          {"green_hair", C::hair, {0.25, 0.70, 0.30}},
          {"red_eyes", C::eye, {0.85, 0.10, 0.10}},
          {"yellow_eyes", C::eye, {0.90, 0.85, 0.10}},
          {"purple_eyes", C::eye, {0.55, 0.20, 0.75}},
          {"aqua_eyes", C::eye, {0.10, 0.80, 0.80}},
          {"white_dress", C::garment, {0.88, 0.88, 0.88}},
          {"black_dress", C::garment, {0.15, 0.15, 0.18}},
          {"orange_dress", C::garment, {0.95, 0.55, 0.15}},
          {"brown_dress", C::garment, {0.50, 0.30, 0.15}},
      },
      {"hat", "ribbon", "twintails", "short_hair", "skirt", "open_mouth"});
}

TagVocabulary TagVocabulary::parse(std::string_view text) {
  enum class Section { none, cvt, cit } section = Section::none;
  std::vector<CvtEntry> cvts;
  std::vector<std::string> cits;
  bool saw_version = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                              : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = " (line " + std::to_string(line_no) + ")";
    if (line == "[cvt]") { section = Section::cvt; continue; }
    if (line == "[cit]") { section = Section::cit; continue; }
    if (line.starts_with("version")) {
      const auto eq = line.find('=');
      int v = 0;
      const auto num = eq == std::string_view::npos ? std::string_view{}
                                                    : trim(line.substr(eq + 1));
      auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
      if (ec != std::errc{} || p != num.data() + num.size())
        throw VocabularyError("malformed version line" + where);
      if (v != kFormatVersion)
        throw VocabularyError("unsupported vocabulary version " +
                              std::to_string(v) + where);
      saw_version = true;
      continue;
    }
    std::istringstream fields{std::string(line)};
    if (section == Section::cvt) {
      std::string name;
      std::string cat;
      CvtEntry e;
      if (!(fields >> name >> cat >> e.rgb.r >> e.rgb.g >> e.rgb.b))
        throw VocabularyError("malformed cvt entry" + where);
      const auto c = parse_category(cat);
      if (!c) throw VocabularyError("unknown category '" + cat + "'" + where);
      e.name = name;
      e.category = *c;
      cvts.push_back(std::move(e));
    } else if (section == Section::cit) {
      std::string name;
      std::string extra;
      if (!(fields >> name) || (fields >> extra))
        throw VocabularyError("malformed cit entry" + where);
      cits.push_back(std::move(name));
    } else {
      throw VocabularyError("entry outside [cvt]/[cit] section" + where);
    }
  }
  if (!saw_version) throw VocabularyError("vocabulary manifest lacks version");
  return TagVocabulary(std::move(cvts), std::move(cits));
}

TagVocabulary TagVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw VocabularyError("cannot open vocabulary " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string TagVocabulary::serialize() const {
  std::ostringstream out;
  out << "# tag2pix tag vocabulary\n";
  out << "version = " << kFormatVersion << "\n";
  out << "[cvt]\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& e : cvts_) {
    out << e.name << ' ' << to_string(e.category) << ' ' << e.rgb.r << ' '
        << e.rgb.g << ' ' << e.rgb.b << '\n';
  }
  out << "[cit]\n";
  for (const auto& n : cit_names_) out << n << '\n';
  return out.str();
}

void TagVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw VocabularyError("cannot write vocabulary " + path.string());
  out << serialize();
}

std::vector<std::string> TagVocabulary::cvt_names() const {
  std::vector<std::string> names;
  names.reserve(cvts_.size());
  for (const auto& e : cvts_) names.push_back(e.name);
  return names;
}

std::optional<std::size_t> TagVocabulary::index_of(TagKind kind,
                                                   std::string_view name) const {
  const auto& map = kind == TagKind::cvt ? cvt_index_ : cit_index_;
  if (auto it = map.find(std::string(name)); it != map.end()) return it->second;
  return std::nullopt;
}

std::vector<std::size_t> TagVocabulary::category_members(
    ColorCategory category) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cvts_.size(); ++i)
    if (cvts_[i].category == category) out.push_back(i);
  return out;
}

std::size_t TagVector::count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), 1));
}

TagVector encode_tags(const std::set<std::string>& tags,
                      const TagVocabulary& vocab, TagKind kind) {
  TagVector v{kind, std::vector<std::uint8_t>(vocab.size(kind), 0)};
  for (const auto& t : tags) {
    const auto i = vocab.index_of(kind, t);
    if (!i) throw UnknownTagError(t);
    v.values[*i] = 1;
  }
  return v;
}

std::set<std::string> decode_tags(const TagVector& vec,
                                  const TagVocabulary& vocab) {
  const auto n = vocab.size(vec.kind);
  if (vec.values.size() != n) {
    throw std::invalid_argument("tag vector length " +
                                std::to_string(vec.values.size()) +
                                " does not match vocabulary size " +
                                std::to_string(n));
  }
  std::set<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (vec.values[i] > 1)
      throw std::invalid_argument("tag vector entry is not 0/1");
    if (vec.values[i] == 1) out.insert(vocab.name(vec.kind, i));
  }
  return out;
}

std::set<std::string> split_tag_list(std::string_view csv) {
  std::set<std::string> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const auto comma = csv.find(',', pos);
    const auto item = trim(csv.substr(
        pos, comma == std::string_view::npos ? csv.size() - pos : comma - pos));
    if (!item.empty()) out.emplace(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace tag2pix
