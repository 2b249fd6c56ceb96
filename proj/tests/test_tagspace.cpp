#include <gtest/gtest.h>

#include "support/property.hpp"
#include "tag2pix/tagspace.hpp"

using namespace tag2pix;

namespace {

TagVocabulary small_vocab() {
  return TagVocabulary::from_names({"blue_hair", "red_eyes", "blonde_hair"}, {"hat"});
}

}  // namespace

TEST(EncodeTags, MultiHotOverVocabularyOrder) {
  const auto v = small_vocab();
  const auto t = encode_tags({"blue_hair", "red_eyes"}, v, TagKind::cvt);
  EXPECT_EQ(t.values, (std::vector<std::uint8_t>{1, 1, 0}));
  EXPECT_EQ(t.kind, TagKind::cvt);
}

TEST(EncodeTags, EmptySetIsAllZero) {
  const auto t = encode_tags({}, small_vocab(), TagKind::cvt);
  EXPECT_EQ(t.values, (std::vector<std::uint8_t>{0, 0, 0}));
}

TEST(EncodeTags, UnknownTagIsNamed) {
  try {
    encode_tags({"green_hair"}, small_vocab(), TagKind::cvt);
    FAIL() << "expected UnknownTagError";
  } catch (const UnknownTagError& e) {
    EXPECT_EQ(e.tag(), "green_hair");
    EXPECT_NE(std::string(e.what()).find("green_hair"), std::string::npos);
  }
}

TEST(EncodeTags, KindSelectsTable) {
  const auto v = small_vocab();
  EXPECT_THROW(encode_tags({"hat"}, v, TagKind::cvt), UnknownTagError);
  EXPECT_EQ(encode_tags({"hat"}, v, TagKind::cit).values, (std::vector<std::uint8_t>{1}));
}

TEST(DecodeTags, InverseOfEncode) {
  const auto v = small_vocab();
  EXPECT_EQ(decode_tags({TagKind::cvt, {1, 1, 0}}, v),
            (std::set<std::string>{"blue_hair", "red_eyes"}));
  EXPECT_TRUE(decode_tags({TagKind::cvt, {0, 0, 0}}, v).empty());
}

TEST(DecodeTags, RejectsLengthMismatchAndNonBinary) {
  const auto v = small_vocab();
  EXPECT_THROW(decode_tags({TagKind::cvt, {1, 0}}, v), std::invalid_argument);
  EXPECT_THROW(decode_tags({TagKind::cvt, {1, 2, 0}}, v), std::invalid_argument);
}

TEST(TagVocabulary, RejectsDuplicatesAndOverlap) {
  EXPECT_THROW(TagVocabulary::from_names({"a_hair", "a_hair"}, {}), VocabularyError);
  EXPECT_THROW(TagVocabulary::from_names({"a_hair"}, {"hat", "hat"}), VocabularyError);
  EXPECT_THROW(TagVocabulary::from_names({"hat"}, {"hat"}), VocabularyError);
}

TEST(TagVocabulary, DeskDefaultShape) {
  const auto v = TagVocabulary::desk_default();
  EXPECT_EQ(v.cvt_count(), 12u);
  EXPECT_EQ(v.cit_count(), 6u);
  for (auto c : kColorCategories) EXPECT_EQ(v.category_members(c).size(), 4u);
  EXPECT_EQ(v.cit_names(), (std::vector<std::string>{"hat", "ribbon", "twintails", "short_hair",
                                                     "skirt", "open_mouth"}));
}

TEST(TagVocabulary, IndexMapsInvertLists) {
  const auto v = TagVocabulary::desk_default();
  for (auto kind : {TagKind::cvt, TagKind::cit})
    for (std::size_t i = 0; i < v.size(kind); ++i)
      EXPECT_EQ(v.index_of(kind, v.name(kind, i)), i);
  EXPECT_FALSE(v.index_of(TagKind::cvt, "hat"));
}

TEST(TagVocabulary, SerializeRoundTripIsIdentity) {
  const auto v = TagVocabulary::desk_default();
  const auto back = TagVocabulary::parse(v.serialize());
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.hash(), v.hash());
  EXPECT_EQ(back.serialize(), v.serialize());
}

TEST(TagVocabulary, ManifestIsHandEditable) {
  const auto v = TagVocabulary::parse(
      "# comment\nversion = 1\n[cvt]\nblue_hair hair 0.2 0.3 0.9  # trailing\n"
      "red_eyes eye 0.85 0.1 0.1\n[cit]\nhat\n");
  EXPECT_EQ(v.cvt_count(), 2u);
  EXPECT_EQ(v.cvt(0).rgb, (Rgb{0.2, 0.3, 0.9}));
  EXPECT_EQ(v.cvt(1).category, ColorCategory::eye);
}

TEST(TagVocabulary, RejectsUnknownVersion) {
  EXPECT_THROW(TagVocabulary::parse("version = 2\n[cvt]\n[cit]\n"), VocabularyError);
  EXPECT_THROW(TagVocabulary::parse("[cvt]\nblue_hair hair 0 0 0\n"), VocabularyError);
}

TEST(TagVocabulary, HashChangesWithContent) {
  const auto a = TagVocabulary::desk_default();
  auto text = a.serialize();
  text.replace(text.find("blue_hair"), 9, "navy_hair");
  EXPECT_NE(TagVocabulary::parse(text).hash(), a.hash());
}

TEST(SplitTagList, TrimsAndDropsEmpty) {
  EXPECT_EQ(split_tag_list(" blue_hair, red_eyes ,,"),
            (std::set<std::string>{"blue_hair", "red_eyes"}));
  EXPECT_TRUE(split_tag_list("").empty());
}

TEST(TagProperties, DecodeEncodeIsIdentityAndCountsMatch) {
  const auto v = TagVocabulary::desk_default();
  t2p_test::for_all(11, 300, [&](std::mt19937_64& rng) {
    const auto kind = (rng() & 1) ? TagKind::cvt : TagKind::cit;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < v.size(kind); ++i) names.push_back(v.name(kind, i));
    const auto s = t2p_test::random_subset(rng, names);
    const auto enc = encode_tags(s, v, kind);
    ASSERT_EQ(enc.values.size(), v.size(kind));
    EXPECT_EQ(enc.count(), s.size());
    for (auto x : enc.values) EXPECT_TRUE(x == 0 || x == 1);
    EXPECT_EQ(decode_tags(enc, v), s);
  });
}
