#include <gtest/gtest.h>

#include <cmath>

#include "support/gradcheck.hpp"
#include "support/property.hpp"
#include "tag2pix/blocks.hpp"
#include "tag2pix/nets.hpp"

using namespace tag2pix;

namespace {

DecoderBlockOptions tiny_options() {
  DecoderBlockOptions o;
  o.channels = 8;
  o.bottleneck = 8;
  o.cardinality = 2;
  o.style_dim = 8;
  o.reduction = 4;
  return o;
}

void copy_convs(DecoderBlock& from, DecoderBlock& to) {
  torch::NoGradGuard g;
  to->reduce->weight.copy_(from->reduce->weight);
  to->reduce->bias.copy_(from->reduce->bias);
  to->grouped->weight.copy_(from->grouped->weight);
  to->grouped->bias.copy_(from->grouped->bias);
  to->restore->weight.copy_(from->restore->weight);
  to->restore->bias.copy_(from->restore->bias);
}

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, 0.2); }

std::int64_t excitation_size(std::int64_t c, std::int64_t s, std::int64_t r) {
  const auto h = std::max<std::int64_t>(1, (c + s) / r);
  return (c + s) * h + h + h * c + c;
}

}  // namespace

TEST(Squeeze, AllOnesGivesOnes) {
  const auto v = tag2pix::squeeze(torch::ones({1, 3, 4, 4}));
  EXPECT_TRUE(torch::equal(v, torch::ones({1, 3})));
}

TEST(Squeeze, ArangeChannelMeanIsHalf) {
  auto x = torch::zeros({1, 2, 4, 4}, torch::kDouble);
  x[0][0] = torch::arange(16, torch::kDouble).reshape({4, 4}) / 15.0;
  EXPECT_NEAR(tag2pix::squeeze(x)[0][0].item<double>(), 0.5, 1e-15);
}

TEST(Squeeze, SinglePixelIsIdentity) {
  const auto x = torch::randn({2, 5, 1, 1});
  EXPECT_TRUE(torch::equal(tag2pix::squeeze(x), x.view({2, 5})));
}

TEST(Squeeze, RejectsBadShapes) {
  EXPECT_THROW(tag2pix::squeeze(torch::ones({3, 4})), std::invalid_argument);
  EXPECT_THROW(tag2pix::squeeze(torch::ones({1, 3, 0, 4})), std::invalid_argument);
}

TEST(Excitation, ZeroWeightsGiveOneHalf) {
  Excitation e(8, 4, 4);
  torch::NoGradGuard g;
  for (auto& p : e->parameters()) p.zero_();
  const auto s = e(torch::randn({3, 8}), torch::randn({3, 4}));
  EXPECT_TRUE(torch::allclose(s, torch::full({3, 8}, 0.5)));
}

TEST(Excitation, LargeFinalBiasSaturates) {
  Excitation e(8, 4, 4);
  torch::NoGradGuard g;
  e->expand->weight.zero_();
  e->expand->bias.fill_(10.0);
  const auto s = e(torch::randn({2, 8}), torch::randn({2, 4}));
  const double want = 1.0 / (1.0 + std::exp(-10.0));
  EXPECT_NEAR(want, 0.99995, 1e-5);
  EXPECT_TRUE(torch::allclose(s, torch::full({2, 8}, want)));
}

TEST(Excitation, OutputLengthIsChannelCount) {
  for (std::int64_t style : {0, 3, 64}) {
    Excitation e(8, style, 4);
    const auto s = e(torch::randn({2, 8}), style ? torch::randn({2, style}) : torch::Tensor());
    EXPECT_EQ(s.sizes(), (std::vector<std::int64_t>{2, 8}));
  }
}

TEST(Excitation, RejectsLengthMismatch) {
  Excitation e(8, 4, 4);
  EXPECT_THROW(e(torch::randn({1, 7}), torch::randn({1, 4})), std::invalid_argument);
  EXPECT_THROW(e(torch::randn({1, 8}), torch::randn({1, 5})), std::invalid_argument);
  EXPECT_THROW(e(torch::randn({1, 8})), std::invalid_argument);
}

TEST(Excitation, ScalesStayInOpenUnitInterval) {
  t2p_test::for_all(61, 100, [](std::mt19937_64& rng) {
    torch::manual_seed(rng());
    const auto c = t2p_test::uniform_int(rng, 1, 32);
    const auto s = t2p_test::uniform_int(rng, 0, 16);
    Excitation e(c, s, t2p_test::uniform_int(rng, 1, 8));
    const auto out = e(torch::randn({4, c}) * 5, s ? torch::randn({4, s}) * 5 : torch::Tensor());
    EXPECT_GT(out.min().item<float>(), 0.0f);
    EXPECT_LT(out.max().item<float>(), 1.0f);
  });
}

TEST(DecoderBlock, SecatWithUnitExcitationIsResnext) {
  torch::manual_seed(1);
  const auto o = tiny_options();
  DecoderBlock secat(BlockKind::secat, o), plain(BlockKind::resnext, o);
  copy_convs(secat, plain);
  {
    torch::NoGradGuard g;
    secat->excite->expand->weight.zero_();
    secat->excite->expand->bias.fill_(100.0);
  }
  const auto x = torch::randn({2, 8, 4, 4});
  const auto style = torch::randn({2, 8});
  EXPECT_TRUE(torch::equal(secat(x, style), plain(x)));
}

TEST(DecoderBlock, AdainWithIdentityAffineIsNormalizedResidual) {
  torch::manual_seed(2);
  const auto o = tiny_options();
  DecoderBlock b(BlockKind::adain, o);
  {
    torch::NoGradGuard g;
    b->affine->weight.zero_();
    b->affine->bias.zero_();
    b->affine->bias.narrow(0, 0, o.channels).fill_(1.0);
  }
  const auto x = torch::randn({2, 8, 4, 4});
  const auto r = b->restore(lrelu(b->grouped(lrelu(b->reduce(x)))));
  const auto want = lrelu(x + instance_normalize(r));
  EXPECT_TRUE(torch::allclose(b(x, torch::randn({2, 8})), want, 1e-6, 1e-6));
}

TEST(DecoderBlock, ResnextIgnoresStyle) {
  torch::manual_seed(3);
  DecoderBlock b(BlockKind::resnext, tiny_options());
  const auto x = torch::randn({1, 8, 4, 4});
  EXPECT_TRUE(torch::equal(b(x), b(x, torch::randn({1, 8}))));
}

TEST(DecoderBlock, SpatialSizePreservedForEveryKind) {
  for (auto kind : kAllBlockKinds) {
    for (int hw : {1, 3, 4, 9}) {
      DecoderBlock b(kind, tiny_options());
      const auto out = b(torch::randn({2, 8, hw, hw + 1}), torch::randn({2, 8}));
      EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{2, 8, hw, hw + 1})) << to_string(kind);
    }
  }
}

TEST(DecoderBlock, StyleKindsRejectMissingStyle) {
  for (auto kind : kAllBlockKinds) {
    if (!uses_style(kind)) continue;
    DecoderBlock b(kind, tiny_options());
    EXPECT_THROW(b(torch::randn({1, 8, 4, 4})), std::invalid_argument) << to_string(kind);
  }
  DecoderBlock b(BlockKind::resnext, tiny_options());
  EXPECT_THROW(b(torch::randn({1, 7, 4, 4})), std::invalid_argument);
}

TEST(DecoderBlock, GradientsMatchCentralDifferences) {
  for (auto kind : kAllBlockKinds) {
    torch::manual_seed(11);
    DecoderBlock b(kind, tiny_options());
    b->to(torch::kDouble);
    const auto x = torch::randn({1, 8, 4, 4}, torch::kDouble);
    const auto style = torch::randn({1, 8}, torch::kDouble);
    const auto w = torch::randn({1, 8, 4, 4}, torch::kDouble);
    const auto params = b->parameters();
    const auto r = t2p_test::grad_check(params, [&] { return (b(x, style) * w).sum(); },
                                        t2p_test::all_coords(params));
    EXPECT_LT(r.max_rel_error, 1e-3) << to_string(kind) << " over " << r.checked << " scalars";
  }
}

TEST(BlockKind, NamesRoundTrip) {
  const char* names[] = {"resnext", "se_resnext", "concat_front", "concat_all", "adain", "secat"};
  for (std::size_t i = 0; i < kAllBlockKinds.size(); ++i) {
    EXPECT_EQ(to_string(kAllBlockKinds[i]), names[i]);
    EXPECT_EQ(parse_block_kind(names[i]), kAllBlockKinds[i]);
  }
  EXPECT_FALSE(parse_block_kind("se-resnext"));
}

TEST(CountParams, LinearTenToFive) {
  torch::nn::Linear fc(10, 5);
  EXPECT_EQ(count_params(*fc), 55);
  EXPECT_EQ(count_params(*fc), count_params(*fc));
}

TEST(CountParams, IgnoresFrozenParameters) {
  torch::nn::Linear fc(10, 5);
  fc->bias.set_requires_grad(false);
  EXPECT_EQ(count_params(*fc), 50);
}

TEST(CountParams, GeneratorSecatMinusResnextIsExcitationSize) {
  const auto v = TagVocabulary::desk_default();
  const auto ca = NetworkConfig::toy(64, 16, BlockKind::resnext, v);
  const auto ce = NetworkConfig::toy(64, 16, BlockKind::secat, v);
  Generator a(ca, CitExtractor(ca)), e(ce, CitExtractor(ce));
  std::int64_t se = 0;
  for (auto c : ce.decoder_channels) se += excitation_size(c, ce.style_dim, ce.se_reduction);
  EXPECT_EQ(count_params(*e) - count_params(*a), se);
}

TEST(CountParams, ToyGeneratorOrdering) {
  const auto v = TagVocabulary::desk_default();
  std::map<BlockKind, std::int64_t> n;
  for (auto kind : kAllBlockKinds) {
    const auto c = NetworkConfig::toy(64, 16, kind, v);
    Generator g(c, CitExtractor(c));
    n[kind] = count_params(*g);
  }
  EXPECT_LT(n[BlockKind::resnext], n[BlockKind::se_resnext]);
  EXPECT_LE(n[BlockKind::se_resnext], n[BlockKind::secat]);
  EXPECT_LT(n[BlockKind::secat], n[BlockKind::concat_front]);
}
