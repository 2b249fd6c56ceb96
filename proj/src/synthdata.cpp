#include "tag2pix/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tag2pix/lineart.hpp"

namespace tag2pix {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index)));
}

std::string sample_id(std::size_t i) {
  std::ostringstream s;
  s.width(6);
  s.fill('0');
  s << i;
  return s.str();
}

const Rgb& rgb_of(const TagVocabulary& vocab, const std::string& tag) {
  const auto i = vocab.index_of(TagKind::cvt, tag);
  if (!i) throw UnknownTagError(tag);
  return vocab.cvt(*i).rgb;
}

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double u, double v) const {
    const double dx = (u - cx) / rx;
    const double dy = (v - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  }
};

struct Box {
  double x0, y0, x1, y1;
  bool contains(double u, double v) const {
    return u >= x0 && u <= x1 && v >= y0 && v <= y1;
  }
};

/// Vertical trapezoid: half-width grows linearly from `top_half` at y0 to
/// `bottom_half` at y1.
struct Trapezoid {
  double cx, y0, y1, top_half, bottom_half;
  bool contains(double u, double v) const {
    if (v < y0 || v > y1) return false;
    const double t = (v - y0) / (y1 - y0);
    return std::abs(u - cx) <= top_half + t * (bottom_half - top_half);
  }
};

struct Geometry {
  double cx, hy, hr;
  bool short_hair, twintails, skirt, hat, ribbon, open_mouth;
};

/// Painter's-order region lookup for one point in normalized coordinates.
Region region_at(const Geometry& g, double u, double v) {
  const double cx = g.cx;
  const double hy = g.hy;
  const double hr = g.hr;
  Region r = Region::background;

  const Ellipse hair_back = g.short_hair
                                ? Ellipse{cx, hy - 0.01, hr * 1.18, hr * 1.12}
                                : Ellipse{cx, hy + 0.10, hr * 1.28, hr * 1.55};
  if (hair_back.contains(u, v)) r = Region::hair;
  if (g.twintails) {
    const Ellipse left{cx - hr * 1.38, hy + 0.12, 0.065, 0.17};
    const Ellipse right{cx + hr * 1.38, hy + 0.12, 0.065, 0.17};
    if (left.contains(u, v) || right.contains(u, v)) r = Region::hair;
  }
  const double neck_y = hy + hr * 0.95;
  const Trapezoid torso{cx, neck_y, 1.0, 0.12, 0.21};
  const Trapezoid flare{cx, 0.80, 1.0, 0.21, 0.36};
  if (torso.contains(u, v) || (g.skirt && flare.contains(u, v)))
    r = Region::garment;
  const Box neck{cx - 0.035, hy + hr * 0.7, cx + 0.035, neck_y + 0.01};
  if (neck.contains(u, v)) r = Region::skin;
  const Ellipse head{cx, hy, hr, hr * 1.08};
  if (head.contains(u, v)) r = Region::skin;
  const Ellipse bangs{cx, hy - hr * 0.35, hr * 1.06, hr * 0.74};
  if (bangs.contains(u, v) && v < hy - hr * 0.1) r = Region::hair;
  const Ellipse eye_l{cx - hr * 0.42, hy + hr * 0.2, hr * 0.21, hr * 0.29};
  const Ellipse eye_r{cx + hr * 0.42, hy + hr * 0.2, hr * 0.21, hr * 0.29};
  if (eye_l.contains(u, v) || eye_r.contains(u, v)) r = Region::eyes;
  if (g.hat) {
    const Box brim{cx - hr * 1.4, hy - hr * 0.98, cx + hr * 1.4, hy - hr * 0.78};
    const Box crown{cx - hr * 0.8, hy - hr * 1.6, cx + hr * 0.8, hy - hr * 0.9};
    if (brim.contains(u, v) || crown.contains(u, v)) r = Region::garment;
  }
  if (g.ribbon) {
    const double bx = cx + hr * 0.9;
    const double by = hy - hr * 0.75;
    const Ellipse wing_l{bx - hr * 0.2, by, hr * 0.2, hr * 0.14};
    const Ellipse wing_r{bx + hr * 0.2, by, hr * 0.2, hr * 0.14};
    if (wing_l.contains(u, v) || wing_r.contains(u, v)) r = Region::garment;
  }
  return r;
}

bool mouth_ink_at(const Geometry& g, double u, double v, double px) {
  const double my = g.hy + g.hr * 0.62;
  if (g.open_mouth) {
    return Ellipse{g.cx, my, g.hr * 0.17, g.hr * 0.12}.contains(u, v);
  }
  return std::abs(v - my) <= 0.5 * px && std::abs(u - g.cx) <= g.hr * 0.2;
}

Rgb shade(const Rgb& c, double factor) {
  return {c.r * factor, c.g * factor, c.b * factor};
}

}  // namespace

Region region_for(ColorCategory c) {
  switch (c) {
    case ColorCategory::hair: return Region::hair;
    case ColorCategory::eye: return Region::eyes;
    case ColorCategory::garment: return Region::garment;
  }
  return Region::garment;
}

const std::string& SpriteSpec::color_for(ColorCategory c) const {
  switch (c) {
    case ColorCategory::hair: return hair_color;
    case ColorCategory::eye: return eye_color;
    case ColorCategory::garment: return garment_color;
  }
  return garment_color;
}

SpriteSpec sample_spec(std::uint64_t seed, const TagVocabulary& vocab) {
  std::mt19937_64 rng(seed);
  SpriteSpec spec;
  for (auto cat : kColorCategories) {
    const auto members = vocab.category_members(cat);
    if (members.empty())
      throw std::invalid_argument("vocabulary has no " +
                                  std::string(to_string(cat)) + " colors");
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    const auto& name = vocab.cvt(members[pick(rng)]).name;
    switch (cat) {
      case ColorCategory::hair: spec.hair_color = name; break;
      case ColorCategory::eye: spec.eye_color = name; break;
      case ColorCategory::garment: spec.garment_color = name; break;
    }
  }
  std::bernoulli_distribution coin(0.5);
  for (const auto& cit : vocab.cit_names())
    if (coin(rng)) spec.cit_attrs.insert(cit);
  spec.geometry_seed = rng();
  return spec;
}

bool supported_sprite_size(int size) {
  return size == 64 || size == 128 || size == 256;
}

RenderedSprite render_sprite(const SpriteSpec& spec, const TagVocabulary& vocab,
                             int size) {
  if (!supported_sprite_size(size))
    throw std::invalid_argument("render_sprite: unsupported size " +
                                std::to_string(size) + " (use 64, 128, 256)");
  std::mt19937_64 rng(spec.geometry_seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  Geometry g{};
  g.cx = 0.5 + 0.04 * jitter(rng);
  g.hy = 0.36 + 0.03 * jitter(rng);
  g.hr = 0.17 + 0.015 * jitter(rng);
  g.short_hair = spec.has("short_hair");
  g.twintails = spec.has("twintails");
  g.skirt = spec.has("skirt");
  g.hat = spec.has("hat");
  g.ribbon = spec.has("ribbon");
  g.open_mouth = spec.has("open_mouth");
  const double light = 0.5 + 0.5 * jitter(rng);

  const double px = 1.0 / size;
  LabelMap labels(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      labels.at(x, y) = static_cast<std::uint8_t>(
          region_at(g, (x + 0.5) * px, (y + 0.5) * px));

  // Ink: border pixels of every foreground region (one side of each border),
  // thickened for larger sprites, plus the mouth.
  const int line_width = std::max(1, size / 128);
  std::vector<std::uint8_t> ink(labels.labels.size(), 0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const auto l = labels.at(x, y);
      if (l == 0) continue;
      auto get = [&](int xx, int yy) -> int {
        if (xx < 0 || yy < 0 || xx >= size || yy >= size) return 0;
        return labels.at(xx, yy);
      };
      const bool border = get(x - 1, y) != l || get(x, y - 1) != l ||
                          get(x + 1, y) == 0 || get(x, y + 1) == 0;
      if (border) ink[static_cast<std::size_t>(y) * size + x] = 1;
    }
  }
  if (line_width > 1) {
    auto thick = ink;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        if (!ink[static_cast<std::size_t>(y) * size + x]) continue;
        for (int dy = 0; dy < line_width; ++dy)
          for (int dx = 0; dx < line_width; ++dx) {
            const int xx = std::min(x + dx, size - 1);
            const int yy = std::min(y + dy, size - 1);
            if (labels.at(xx, yy) != 0)
              thick[static_cast<std::size_t>(yy) * size + xx] = 1;
          }
      }
    ink = std::move(thick);
  }
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (mouth_ink_at(g, (x + 0.5) * px, (y + 0.5) * px, px))
        ink[static_cast<std::size_t>(y) * size + x] = 1;

  const Rgb fills[kRegionCount] = {
      {1.0, 1.0, 1.0}, rgb_of(vocab, spec.hair_color),
      rgb_of(vocab, spec.eye_color), rgb_of(vocab, spec.garment_color),
      kSkinRgb};

  RenderedSprite out{Image(size, size, 3), std::move(labels)};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const auto i = static_cast<std::size_t>(y) * size + x;
      Rgb c;
      if (ink[i]) {
        out.masks.labels[i] = 0;
        c = kInkRgb;
      } else {
        const auto l = out.masks.labels[i];
        // Soft diagonal light falloff: at most 6% darker.
        const double t = ((1.0 - light) * x + light * y) * px;
        c = l == 0 ? fills[0] : shade(fills[l], 1.0 - 0.06 * t);
      }
      out.color_image.at(x, y, 0) = static_cast<float>(c.r);
      out.color_image.at(x, y, 1) = static_cast<float>(c.g);
      out.color_image.at(x, y, 2) = static_cast<float>(c.b);
    }
  }
  return out;
}

SampleRecord make_record(const SpriteSpec& spec, const TagVocabulary& vocab,
                         int size) {
  auto sprite = render_sprite(spec, vocab, size);
  SampleRecord rec;
  rec.line_art = xdog(grayscale(sprite.color_image), sprite_default_xdog(size));
  rec.color_image = std::move(sprite.color_image);
  rec.masks = std::move(sprite.masks);
  rec.cvt = encode_tags(spec.color_tags(), vocab, TagKind::cvt);
  rec.cit = encode_tags(spec.cit_attrs, vocab, TagKind::cit);
  rec.spec = spec;
  return rec;
}

std::size_t DatasetManifest::train_count() const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [](const auto& e) { return !e.test; }));
}

std::size_t DatasetManifest::test_count() const {
  return entries.size() - train_count();
}

std::string DatasetManifest::to_json() const {
  json j;
  j["format"] = kFormat;
  j["version"] = version;
  j["valid"] = valid;
  j["n"] = n;
  j["size"] = size;
  j["seed"] = seed;
  j["vocab_hash"] = vocab_hash;
  j["vocab_file"] = "vocab.txt";
  json arr = json::array();
  for (const auto& e : entries) {
    arr.push_back({{"id", e.id},
                   {"split", e.test ? "test" : "train"},
                   {"image", e.image},
                   {"mask", e.mask},
                   {"line", e.line},
                   {"tags", e.tags}});
  }
  j["entries"] = std::move(arr);
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DatasetError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != kFormat)
    throw DatasetError("manifest format is not " + std::string(kFormat));
  const int v = j.value("version", -1);
  if (v != kVersion)
    throw DatasetError("unsupported manifest version " + std::to_string(v));
  DatasetManifest m;
  try {
    m.valid = j.at("valid").get<bool>();
    m.n = j.at("n").get<std::size_t>();
    m.size = j.at("size").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.vocab_hash = j.at("vocab_hash").get<std::string>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry me;
      me.id = e.at("id").get<std::string>();
      const auto split = e.at("split").get<std::string>();
      if (split != "train" && split != "test")
        throw DatasetError("entry " + me.id + ": unknown split " + split);
      me.test = split == "test";
      me.image = e.at("image").get<std::string>();
      me.mask = e.at("mask").get<std::string>();
      me.line = e.at("line").get<std::string>();
      me.tags = e.at("tags").get<std::string>();
      m.entries.push_back(std::move(me));
    }
  } catch (const json::exception& e) {
    throw DatasetError(std::string("manifest field error: ") + e.what());
  }
  return m;
}

std::vector<bool> test_split(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i)
    keys[i] = splitmix64(seed * 0x2545f4914f6cdd1dULL + i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
  });
  std::vector<bool> is_test(n, false);
  for (std::size_t k = 0; k < n / 10; ++k) is_test[order[k]] = true;
  return is_test;
}

std::string format_tags_file(const SpriteSpec& spec) {
  std::ostringstream out;
  out << "hair = " << spec.hair_color << "\n";
  out << "eye = " << spec.eye_color << "\n";
  out << "garment = " << spec.garment_color << "\n";
  out << "cit = ";
  bool first = true;
  for (const auto& c : spec.cit_attrs) {
    out << (first ? "" : ",") << c;
    first = false;
  }
  out << "\n";
  out << "geometry_seed = " << spec.geometry_seed << "\n";
  return out.str();
}

SpriteSpec parse_tags_file(const std::string& text) {
  SpriteSpec spec;
  std::istringstream in(text);
  std::string line;
  bool seen[5] = {};
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto key = line.substr(0, eq);
    auto value = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
    };
    strip(key);
    strip(value);
    if (key == "hair") { spec.hair_color = value; seen[0] = true; }
    else if (key == "eye") { spec.eye_color = value; seen[1] = true; }
    else if (key == "garment") { spec.garment_color = value; seen[2] = true; }
    else if (key == "cit") { spec.cit_attrs = split_tag_list(value); seen[3] = true; }
    else if (key == "geometry_seed") {
      spec.geometry_seed = std::stoull(value);
      seen[4] = true;
    } else {
      throw DatasetError("tags file: unknown key '" + key + "'");
    }
  }
  if (!std::all_of(std::begin(seen), std::end(seen), [](bool b) { return b; }))
    throw DatasetError("tags file: missing field");
  return spec;
}

DatasetManifest build_dataset(std::size_t n, int size, std::uint64_t seed,
                              const TagVocabulary& vocab,
                              const fs::path& out_dir) {
  if (n < 1) throw std::invalid_argument("build_dataset: n must be >= 1");
  if (!supported_sprite_size(size))
    throw std::invalid_argument("build_dataset: unsupported size " +
                                std::to_string(size));
  DatasetManifest m;
  m.n = n;
  m.size = size;
  m.seed = seed;
  m.vocab_hash = vocab.hash();
  auto write_manifest = [&] {
    std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
    out << m.to_json();
    if (!out) throw DatasetError("cannot write manifest in " + out_dir.string());
  };
  try {
    for (const char* sub : {"img", "mask", "line", "tags"})
      fs::create_directories(out_dir / sub);
    vocab.save(out_dir / "vocab.txt");
    const auto is_test = test_split(n, seed);
    for (std::size_t i = 0; i < n; ++i) {
      const auto spec = sample_spec(sample_seed(seed, i), vocab);
      const auto rec = make_record(spec, vocab, size);
      ManifestEntry e;
      e.id = sample_id(i);
      e.test = is_test[i];
      e.image = "img/" + e.id + ".png";
      e.mask = "mask/" + e.id + ".png";
      e.line = "line/" + e.id + ".png";
      e.tags = "tags/" + e.id + ".txt";
      write_png(out_dir / e.image, rec.color_image);
      write_label_png(out_dir / e.mask, rec.masks);
      write_png(out_dir / e.line, rec.line_art);
      std::ofstream tags(out_dir / e.tags, std::ios::trunc);
      tags << format_tags_file(spec);
      if (!tags) throw DatasetError("cannot write " + e.tags);
      m.entries.push_back(std::move(e));
    }
    write_manifest();
  } catch (...) {
    m.valid = false;
    try {
      write_manifest();
    } catch (...) {
    }
    throw;
  }
  return m;
}

std::vector<std::size_t> Dataset::indices(bool test) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (manifest.entries[i].test == test) out.push_back(i);
  return out;
}

Dataset Dataset::load(const fs::path& dir, const TagVocabulary* expected) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DatasetError("no manifest.json in " + dir.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto manifest = DatasetManifest::from_json(ss.str());
  if (!manifest.valid)
    throw DatasetError("dataset " + dir.string() + " is marked invalid");
  auto vocab = TagVocabulary::load(dir / "vocab.txt");
  if (vocab.hash() != manifest.vocab_hash)
    throw DatasetError("vocab.txt hash does not match manifest");
  if (expected && expected->hash() != manifest.vocab_hash)
    throw DatasetError("dataset vocabulary hash " + manifest.vocab_hash +
                       " does not match expected " + expected->hash());
  Dataset ds{std::move(vocab), std::move(manifest), {}};
  ds.records.reserve(ds.manifest.entries.size());
  for (const auto& e : ds.manifest.entries) {
    SampleRecord rec;
    rec.color_image = read_png(dir / e.image, 3);
    rec.masks = read_label_png(dir / e.mask);
    rec.line_art = read_png(dir / e.line, 1);
    std::ifstream t(dir / e.tags);
    if (!t) throw DatasetError("missing " + e.tags);
    std::stringstream ts;
    ts << t.rdbuf();
    rec.spec = parse_tags_file(ts.str());
    rec.cvt = encode_tags(rec.spec.color_tags(), ds.vocab, TagKind::cvt);
    rec.cit = encode_tags(rec.spec.cit_attrs, ds.vocab, TagKind::cit);
    if (!rec.color_image.same_extent(rec.line_art) ||
        rec.masks.width != rec.color_image.width ||
        rec.masks.height != rec.color_image.height)
      throw DatasetError("entry " + e.id + ": image/mask sizes differ");
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

Dataset Dataset::synthesize(std::size_t n, int size, std::uint64_t seed,
                            const TagVocabulary& vocab) {
  if (n < 1) throw std::invalid_argument("synthesize: n must be >= 1");
  Dataset ds{vocab, {}, {}};
  ds.manifest.n = n;
  ds.manifest.size = size;
  ds.manifest.seed = seed;
  ds.manifest.vocab_hash = vocab.hash();
  const auto is_test = test_split(n, seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto spec = sample_spec(sample_seed(seed, i), vocab);
    ds.records.push_back(make_record(spec, vocab, size));
    ManifestEntry e;
    e.id = sample_id(i);
    e.test = is_test[i];
    ds.manifest.entries.push_back(std::move(e));
  }
  return ds;
}

}  // namespace tag2pix
