#include <gtest/gtest.h>

#include "support/gradcheck.hpp"
#include "support/property.hpp"
#include "tag2pix/nets.hpp"

using namespace tag2pix;

namespace {

const TagVocabulary& vocab() {
  static const auto v = TagVocabulary::desk_default();
  return v;
}

NetworkConfig toy64(BlockKind kind = BlockKind::secat) {
  return NetworkConfig::toy(64, 16, kind, vocab());
}

torch::Tensor cvt_batch(const std::vector<std::set<std::string>>& sets) {
  std::vector<torch::Tensor> rows;
  for (const auto& s : sets) rows.push_back(tags_to_tensor(encode_tags(s, vocab(), TagKind::cvt)));
  return torch::stack(rows);
}

}  // namespace

TEST(PixelShuffle, OneByOneByFour) {
  const auto x = torch::tensor({1.0f, 2.0f, 3.0f, 4.0f}).view({1, 4, 1, 1});
  const auto y = tag2pix::pixel_shuffle(x, 2);
  EXPECT_TRUE(torch::equal(y, torch::tensor({1.0f, 2.0f, 3.0f, 4.0f}).view({1, 1, 2, 2})));
}

TEST(PixelShuffle, MatchesIndexLoopOracle) {
  t2p_test::for_all(71, 20, [](std::mt19937_64& rng) {
    torch::manual_seed(rng());
    const std::int64_t r = t2p_test::uniform_int(rng, 1, 3);
    const std::int64_t c = t2p_test::uniform_int(rng, 1, 3);
    const std::int64_t h = t2p_test::uniform_int(rng, 1, 5);
    const std::int64_t w = t2p_test::uniform_int(rng, 1, 5);
    const auto x = torch::randn({2, c * r * r, h, w});
    const auto y = tag2pix::pixel_shuffle(x, r);
    ASSERT_EQ(y.sizes(), (std::vector<std::int64_t>{2, c, r * h, r * w}));
    const auto xa = x.accessor<float, 4>();
    const auto ya = y.accessor<float, 4>();
    for (int n = 0; n < 2; ++n)
      for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx)
            for (int dy = 0; dy < r; ++dy)
              for (int dx = 0; dx < r; ++dx)
                ASSERT_EQ(ya[n][ch][r * yy + dy][r * xx + dx],
                          xa[n][ch * r * r + dy * r + dx][yy][xx]);
  });
}

TEST(PixelShuffle, RandomFourByFourByEight) {
  torch::manual_seed(5);
  const auto x = torch::randn({1, 8, 4, 4});
  const auto y = tag2pix::pixel_shuffle(x, 2);
  const auto xa = x.accessor<float, 4>();
  const auto ya = y.accessor<float, 4>();
  for (int c = 0; c < 2; ++c)
    for (int yy = 0; yy < 4; ++yy)
      for (int xx = 0; xx < 4; ++xx)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            ASSERT_EQ(ya[0][c][2 * yy + dy][2 * xx + dx], xa[0][c * 4 + dy * 2 + dx][yy][xx]);
  EXPECT_TRUE(torch::equal(std::get<0>(x.flatten().sort()), std::get<0>(y.flatten().sort())));
}

TEST(PixelShuffle, IdentityAndErrors) {
  const auto x = torch::randn({1, 6, 3, 3});
  EXPECT_TRUE(torch::equal(tag2pix::pixel_shuffle(x, 1), x));
  EXPECT_THROW(tag2pix::pixel_shuffle(x, 2), std::invalid_argument);
}

TEST(NetworkConfig, ToySplitAndJsonRoundTrip) {
  const auto c = toy64();
  EXPECT_EQ(c.fusion_spatial(), 8);
  EXPECT_EQ(c.encoder_channels, 4 * c.cvt_spatial_channels);
  EXPECT_EQ(c.cit_channels, 4 * c.cvt_spatial_channels);
  EXPECT_EQ(c.fusion_depth(), c.encoder_channels + c.cit_channels + c.cvt_spatial_channels);
  EXPECT_EQ(NetworkConfig::from_json(c.to_json()), c);
  auto bad = c;
  bad.image_size = 48;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(ImageTensor, RoundTripsThroughUnitRange) {
  std::mt19937_64 rng(3);
  const auto im = t2p_test::random_image(rng, 8, 6, 3);
  const auto t = image_to_tensor(im);
  EXPECT_EQ(t.sizes(), (std::vector<std::int64_t>{3, 6, 8}));
  EXPECT_GE(t.min().item<float>(), -1.0f);
  EXPECT_LE(t.max().item<float>(), 1.0f);
  const auto back = tensor_to_image(t);
  for (std::size_t i = 0; i < im.data.size(); ++i) ASSERT_NEAR(back.data[i], im.data[i], 1e-6);
}

TEST(CitExtractor, ReluFeaturesAtOneEighth) {
  torch::manual_seed(1);
  const auto c = toy64();
  CitExtractor cit(c);
  cit->eval();
  t2p_test::for_all(73, 5, [&](std::mt19937_64& rng) {
    const auto x = image_to_tensor(t2p_test::random_image(rng, 64, 64, 1)).unsqueeze(0);
    const auto f = cit->features(x);
    EXPECT_EQ(f.sizes(), (std::vector<std::int64_t>{1, c.cit_channels, 8, 8}));
    EXPECT_GE(f.min().item<float>(), 0.0f);
    EXPECT_TRUE(torch::equal(f, cit->features(x)));
  });
  EXPECT_TRUE(cit->extract(torch::zeros({1, 1, 64, 64})).untrained);
  EXPECT_EQ(cit->forward(torch::zeros({2, 1, 64, 64})).sizes(),
            (std::vector<std::int64_t>{2, c.cit_count}));
}

TEST(CvtEncoder, StyleLengthAndZeroInputDeterminism) {
  torch::manual_seed(2);
  const auto c = toy64();
  CvtEncoder enc(c);
  const auto zero = torch::zeros({1, c.cvt_count});
  auto [grid, style] = enc(zero);
  auto [grid2, style2] = enc(zero);
  EXPECT_EQ(style.sizes(), (std::vector<std::int64_t>{1, 64}));
  EXPECT_EQ(grid.sizes(), (std::vector<std::int64_t>{1, c.cvt_spatial_channels, 8, 8}));
  EXPECT_TRUE(torch::equal(style, style2));
  EXPECT_TRUE(torch::equal(grid, grid2));
  EXPECT_TRUE(torch::isfinite(style).all().item<bool>());
  EXPECT_THROW(enc(torch::zeros({1, c.cvt_count + 1})), std::invalid_argument);
}

TEST(CvtEncoder, DistinctTagSetsGiveDistinctStyles) {
  torch::manual_seed(3);
  CvtEncoder enc(toy64());
  std::vector<std::set<std::string>> sets;
  for (const auto& h : vocab().category_members(ColorCategory::hair))
    for (const auto& e : vocab().category_members(ColorCategory::eye))
      for (const auto& g : vocab().category_members(ColorCategory::garment))
        sets.push_back({vocab().cvt(h).name, vocab().cvt(e).name, vocab().cvt(g).name});
  const auto style = enc(cvt_batch(sets)).second;
  for (std::int64_t i = 0; i < style.size(0); ++i)
    for (std::int64_t j = i + 1; j < style.size(0); ++j)
      ASSERT_FALSE(torch::equal(style[i], style[j])) << i << " vs " << j;
}

TEST(Generator, ShapesBoundsAndDeterminism) {
  torch::manual_seed(4);
  const auto c = toy64();
  Generator g(c, CitExtractor(c));
  g->eval();
  std::mt19937_64 rng(5);
  const auto x = torch::stack({image_to_tensor(t2p_test::random_image(rng, 64, 64, 1)),
                               image_to_tensor(t2p_test::random_image(rng, 64, 64, 1))});
  const auto cvt = cvt_batch({{"blue_hair", "red_eyes", "white_dress"},
                              {"pink_hair", "aqua_eyes", "black_dress"}});
  const auto out = g(x, cvt);
  for (const auto& t : {out.full, out.guide}) {
    EXPECT_EQ(t.sizes(), (std::vector<std::int64_t>{2, 3, 64, 64}));
    EXPECT_GE(t.min().item<float>(), -1.0f);
    EXPECT_LE(t.max().item<float>(), 1.0f);
    EXPECT_TRUE(torch::isfinite(t).all().item<bool>());
  }
  const auto again = g(x, cvt);
  EXPECT_TRUE(torch::equal(out.full, again.full));
  EXPECT_TRUE(torch::equal(out.guide, again.guide));
}

TEST(Generator, ChangingOnlyTheCvtChangesTheOutput) {
  torch::manual_seed(6);
  const auto c = toy64();
  Generator g(c, CitExtractor(c));
  std::mt19937_64 rng(7);
  const auto x = image_to_tensor(t2p_test::random_image(rng, 64, 64, 1)).unsqueeze(0);
  const auto a = g(x, cvt_batch({{"blue_hair", "red_eyes", "white_dress"}})).full;
  const auto b = g(x, cvt_batch({{"green_hair", "red_eyes", "white_dress"}})).full;
  EXPECT_GT((a - b).abs().sum().item<double>(), 0.0);
}

TEST(Generator, EveryKindBuildsAndRuns) {
  for (auto kind : kAllBlockKinds) {
    const auto c = NetworkConfig::toy(16, 8, kind, vocab());
    Generator g(c, CitExtractor(c));
    const auto out = g(torch::zeros({1, 1, 16, 16}), torch::zeros({1, c.cvt_count}));
    EXPECT_EQ(out.full.sizes(), (std::vector<std::int64_t>{1, 3, 16, 16})) << to_string(kind);
  }
}

TEST(Generator, RejectsMismatchedInputsAndExtractor) {
  const auto c = toy64();
  Generator g(c, CitExtractor(c));
  EXPECT_THROW(g(torch::zeros({1, 1, 32, 32}), torch::zeros({1, 12})), std::invalid_argument);
  EXPECT_THROW(g(torch::zeros({1, 1, 64, 64}), torch::zeros({2, 12})), std::invalid_argument);
  EXPECT_THROW(Generator(c, CitExtractor(NetworkConfig::toy(32, 16, BlockKind::secat, vocab()))),
               std::invalid_argument);
}

TEST(Generator, FrozenExtractorIsExcludedFromTrainableParameters) {
  const auto c = toy64();
  Generator g(c, CitExtractor(c));
  std::int64_t n = 0;
  for (const auto& p : g->trainable_parameters()) n += p.numel();
  EXPECT_EQ(n, count_params(*g));
  for (const auto& p : g->cit->parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(Generator, MiniatureGradientCheck) {
  torch::manual_seed(8);
  const auto c = NetworkConfig::toy(16, 8, BlockKind::secat, vocab());
  Generator g(c, CitExtractor(c));
  g->to(torch::kDouble);
  std::mt19937_64 rng(9);
  const auto x =
      image_to_tensor(t2p_test::random_image(rng, 16, 16, 1)).unsqueeze(0).to(torch::kDouble);
  const auto cvt = cvt_batch({{"blue_hair", "red_eyes", "white_dress"}}).to(torch::kDouble);
  const auto params = g->trainable_parameters();
  const auto loss = [&] {
    const auto out = g(x, cvt);
    return out.full.pow(2).sum() + out.guide.pow(2).sum();
  };
  const auto r = t2p_test::grad_check(params, loss, t2p_test::sample_coords(params, 40, 10));
  EXPECT_EQ(r.checked, 40u);
  EXPECT_LT(r.max_rel_error, 1e-2);
}

TEST(Discriminator, BoundedHeadsOfVocabularyWidth) {
  torch::manual_seed(10);
  const auto c = toy64();
  Discriminator d(c);
  const auto x = torch::rand({3, 3, 64, 64}) * 2 - 1;
  const auto out = d(x);
  EXPECT_EQ(out.adv.sizes(), (std::vector<std::int64_t>{3}));
  EXPECT_EQ(out.cvt_probs.sizes(), (std::vector<std::int64_t>{3, 12}));
  EXPECT_EQ(out.cit_probs.sizes(), (std::vector<std::int64_t>{3, 6}));
  for (const auto& t : {out.adv, out.cvt_probs, out.cit_probs}) {
    EXPECT_GT(t.min().item<float>(), 0.0f);
    EXPECT_LT(t.max().item<float>(), 1.0f);
  }
}

TEST(Discriminator, AdversarialGradientReachesInput) {
  torch::manual_seed(11);
  Discriminator d(toy64());
  auto x = (torch::rand({1, 3, 64, 64}) * 2 - 1).requires_grad_();
  d(x).adv.sum().backward();
  ASSERT_TRUE(x.grad().defined());
  EXPECT_TRUE(torch::isfinite(x.grad()).all().item<bool>());
  EXPECT_GT(x.grad().abs().sum().item<double>(), 0.0);
}

TEST(Discriminator, ClassificationParametersAreTheTagHeads) {
  Discriminator d(toy64());
  const auto p = d->classification_parameters();
  std::int64_t n = 0;
  for (const auto& t : p) n += t.numel();
  EXPECT_EQ(n, count_params(*d->cvt_head) + count_params(*d->cit_head));
}

TEST(PretrainCit, RejectsEmptyDataset) {
  Dataset ds{vocab(), {}, {}};
  EXPECT_THROW(pretrain_cit(ds, toy64(), {}), std::invalid_argument);
}

TEST(PretrainCit, FirstEpochLowersLossAndExportsMatchingTrunk) {
  torch::set_num_threads(1);
  const auto ds = Dataset::synthesize(120, 64, 2, vocab());
  CitPretrainOptions o;
  o.epochs = 2;
  const auto c = toy64();
  const auto r = pretrain_cit(ds, c, o);
  ASSERT_EQ(r.epoch_losses.size(), 2u);
  EXPECT_LT(r.epoch_losses[0], r.initial_loss);
  EXPECT_EQ(r.test_metrics.size(), vocab().cit_count());
  EXPECT_TRUE(r.extractor->pretrained);
  auto ex = r.extractor;
  const auto f = ex->features(torch::zeros({1, 1, 64, 64}));
  EXPECT_EQ(f.sizes(), (std::vector<std::int64_t>{1, c.cit_channels, 8, 8}));
}

