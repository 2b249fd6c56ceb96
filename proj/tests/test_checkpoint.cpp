#include <gtest/gtest.h>

#include <fstream>

#include "support/property.hpp"
#include "support/tempdir.hpp"
#include "tag2pix/checkpoint.hpp"
#include "tag2pix/training.hpp"

using namespace tag2pix;
namespace fs = std::filesystem;

namespace {

const TagVocabulary& vocab() {
  static const auto v = TagVocabulary::desk_default();
  return v;
}

NetworkConfig config() { return NetworkConfig::toy(64, 8, BlockKind::secat, vocab()); }

TagVocabulary other_vocab() {
  auto text = vocab().serialize();
  text.replace(text.find("green_hair"), 10, "olive_hair");
  return TagVocabulary::parse(text);
}

}  // namespace

TEST(Checkpoint, BundleRoundTripGivesIdenticalInference) {
  torch::manual_seed(1);
  t2p_test::TempDir dir("ckpt_rt");
  auto bundle = ModelBundle::create(config(), vocab(), CitExtractor(config()));
  bundle.state = {{"epoch", 3}};
  std::mt19937_64 rng(2);
  const auto art = t2p_test::random_image(rng, 64, 64, 1);
  const auto cvt = encode_tags({"blue_hair", "red_eyes", "white_dress"}, vocab(), TagKind::cvt);
  const auto before = colorize(bundle.generator, art, cvt);
  save_bundle(dir / "m.ckpt", bundle);
  auto loaded = load_bundle(dir / "m.ckpt", &vocab());
  const auto after = colorize(loaded.generator, art, cvt);
  EXPECT_TRUE(torch::equal(before.full, after.full));
  EXPECT_TRUE(torch::equal(before.guide, after.guide));
  EXPECT_EQ(loaded.config, bundle.config);
  EXPECT_EQ(loaded.state["epoch"], 3);
  EXPECT_EQ(loaded.vocab, vocab());
  const auto x = torch::rand({1, 3, 64, 64}) * 2 - 1;
  EXPECT_TRUE(torch::equal(bundle.discriminator(x).cvt_probs, loaded.discriminator(x).cvt_probs));
  for (const auto& p : loaded.generator->cit->parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(Checkpoint, RefusesMismatchedVocabulary) {
  t2p_test::TempDir dir("ckpt_vocab");
  auto bundle = ModelBundle::create(config(), vocab(), CitExtractor(config()));
  save_bundle(dir / "m.ckpt", bundle);
  const auto other = other_vocab();
  EXPECT_THROW(load_bundle(dir / "m.ckpt", &other), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", &other), CheckpointError);
  EXPECT_NO_THROW(load_checkpoint(dir / "m.ckpt"));
}

TEST(Checkpoint, RefusesCorruptFiles) {
  t2p_test::TempDir dir("ckpt_corrupt");
  auto bundle = ModelBundle::create(config(), vocab(), CitExtractor(config()));
  save_bundle(dir / "m.ckpt", bundle);
  const auto size = fs::file_size(dir / "m.ckpt");

  fs::copy_file(dir / "m.ckpt", dir / "short.ckpt");
  fs::resize_file(dir / "short.ckpt", size - 100);
  EXPECT_THROW(load_bundle(dir / "short.ckpt"), CheckpointError);

  fs::copy_file(dir / "m.ckpt", dir / "magic.ckpt");
  {
    std::fstream f(dir / "magic.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(load_bundle(dir / "magic.ckpt"), CheckpointError);

  fs::copy_file(dir / "m.ckpt", dir / "version.ckpt");
  {
    std::fstream f(dir / "version.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v[4] = {9, 0, 0, 0};
    f.write(v, 4);
  }
  EXPECT_THROW(load_bundle(dir / "version.ckpt"), CheckpointError);
  EXPECT_THROW(load_bundle(dir / "absent.ckpt"), CheckpointError);
}

TEST(Checkpoint, RawContainerRoundTrip) {
  t2p_test::TempDir dir("ckpt_raw");
  Checkpoint c;
  c.meta.config = config();
  c.meta.vocab_hash = vocab().hash();
  c.meta.vocab_text = vocab().serialize();
  c.meta.state = {{"note", "x"}};
  c.tensors["a"] = torch::arange(6, torch::kFloat32).view({2, 3});
  c.tensors["b.scalar"] = torch::tensor(2.5f);
  save_checkpoint(dir / "c.ckpt", c);
  const auto back = load_checkpoint(dir / "c.ckpt", &vocab());
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_TRUE(torch::equal(back.tensors.at("a"), c.tensors.at("a")));
  EXPECT_TRUE(torch::equal(back.tensors.at("b.scalar"), c.tensors.at("b.scalar")));
  EXPECT_EQ(back.meta.state["note"], "x");
  EXPECT_FALSE(fs::exists(dir / "c.ckpt.tmp"));
}

TEST(Checkpoint, CitExtractorRoundTrip) {
  torch::manual_seed(4);
  t2p_test::TempDir dir("ckpt_cit");
  CitExtractor cit(config());
  cit->pretrained = true;
  save_cit_extractor(dir / "cit.ckpt", cit, vocab());
  NetworkConfig cfg;
  auto back = load_cit_extractor(dir / "cit.ckpt", &vocab(), &cfg);
  EXPECT_EQ(cfg.cit_channels, config().cit_channels);
  EXPECT_TRUE(back->pretrained);
  cit->eval();
  back->eval();
  const auto x = torch::rand({1, 1, 64, 64});
  EXPECT_TRUE(torch::equal(cit->features(x), back->features(x)));
  const auto other = other_vocab();
  EXPECT_THROW(load_cit_extractor(dir / "cit.ckpt", &other), CheckpointError);
}

TEST(TensorDigest, SensitiveToValuesNamesAndShapes) {
  const auto t = torch::ones({2, 2});
  const auto d = tensor_digest({{"w", t}});
  EXPECT_EQ(d, tensor_digest({{"w", t.clone()}}));
  EXPECT_NE(d, tensor_digest({{"v", t}}));
  EXPECT_NE(d, tensor_digest({{"w", t.view({4})}}));
  auto u = t.clone();
  u[0][0] = std::nextafter(1.0f, 2.0f);
  EXPECT_NE(d, tensor_digest({{"w", u}}));
}
