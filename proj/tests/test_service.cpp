#include <gtest/gtest.h>

#include <thread>

#include "tag2pix/digest.hpp"
#include "tag2pix/service.hpp"
#include "tag2pix/synthdata.hpp"

// After the Eigen users: <resolv.h> defines a `_res` macro.
#include <httplib.h>

using namespace tag2pix;
using json = nlohmann::json;

namespace {

const TagVocabulary& vocab() {
  static const auto v = TagVocabulary::desk_default();
  return v;
}

ModelBundle model(BlockKind kind, std::uint64_t seed) {
  torch::manual_seed(seed);
  const auto cfg = NetworkConfig::toy(64, 8, kind, vocab());
  return ModelBundle::create(cfg, vocab(), CitExtractor(cfg));
}

std::string sketch_png(int w = 64, int h = 64) {
  auto art = make_record(sample_spec(5, vocab()), vocab(), 64).line_art;
  if (w != 64 || h != 64) art = resize_bilinear(art, w, h);
  const auto bytes = encode_png(art);
  return std::string(bytes.begin(), bytes.end());
}

std::string b64(const std::string& s) {
  return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

Image decode_b64_png(const std::string& s, int channels) {
  const auto bytes = base64_decode(s);
  EXPECT_TRUE(bytes);
  return decode_png(*bytes, channels);
}

/// Live server on an ephemeral local port.
class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    torch::set_num_threads(1);
    ServiceOptions o;
    o.max_image_dim = 256;
    o.max_body_bytes = 1u << 20;
    o.access_log = [this](const std::string& line) {
      std::lock_guard lock(log_mutex_);
      access_log_.push_back(line);
    };
    service_ = std::make_unique<ColorizeService>(o);
    service_->install(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  void load() {
    auto secat = model(BlockKind::secat, 1);
    secat_id_ = checkpoint_id(secat);
    service_->add_variant("secat", std::move(secat), secat_id_);
    auto resnext = model(BlockKind::resnext, 2);
    const auto id = checkpoint_id(resnext);
    service_->add_variant("resnext", std::move(resnext), id);
    service_->mark_ready();
  }

  httplib::Client client() {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }

  httplib::Result post_json(const json& body) {
    return client().Post("/colorize", body.dump(), "application/json");
  }

  httplib::Server server_;
  std::unique_ptr<ColorizeService> service_;
  std::thread thread_;
  int port_ = 0;
  std::string secat_id_;
  std::mutex log_mutex_;
  std::vector<std::string> access_log_;
};

void expect_error(const httplib::Result& r, int status, const std::string& code) {
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, status) << r->body;
  const auto j = json::parse(r->body);
  EXPECT_EQ(j.value("code", ""), code);
  EXPECT_FALSE(j.value("message", "").empty());
}

}  // namespace

TEST_F(ServiceTest, LoadingStateAnswers503) {
  expect_error(client().Get("/tags"), 503, "loading");
  expect_error(client().Get("/health"), 503, "loading");
  expect_error(post_json({{"image", b64(sketch_png())}, {"tags", {"blue_hair"}}}), 503, "loading");
  load();
  EXPECT_EQ(client().Get("/health")->status, 200);
}

TEST_F(ServiceTest, TagsDocument) {
  load();
  const auto r = client().Get("/tags");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  EXPECT_EQ(j["vocab_hash"], vocab().hash());
  std::size_t cvts = 0;
  for (const char* cat : {"hair", "eye", "garment"}) {
    EXPECT_EQ(j["cvt"][cat].size(), 4u) << cat;
    cvts += j["cvt"][cat].size();
  }
  EXPECT_EQ(cvts, 12u);
  EXPECT_EQ(j["cit"].size(), 6u);
  EXPECT_EQ(j["default_variant"], "secat");
  EXPECT_EQ(j["variants"], json({"resnext", "secat"}));
  EXPECT_EQ(client().Get("/tags")->body, r->body);
}

TEST_F(ServiceTest, HealthDocument) {
  load();
  const auto r = client().Get("/health");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["checkpoint_id"], secat_id_);
  EXPECT_EQ(j["vocab_hash"], vocab().hash());
  EXPECT_GE(j["uptime_s"].get<double>(), 0.0);
}

TEST_F(ServiceTest, ColorizeHappyPath) {
  load();
  const auto r = post_json({{"image", b64(sketch_png())}, {"tags", {"blue_hair", "red_eyes"}}});
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  const auto j = json::parse(r->body);
  const auto img = decode_b64_png(j["image"], 3);
  EXPECT_EQ(img.width, 64);
  EXPECT_EQ(img.height, 64);
  const auto guide = decode_b64_png(j["guide_image"], 3);
  EXPECT_EQ(guide.width, 64);
  EXPECT_EQ(j["width"], 64);
  EXPECT_EQ(j["tags"], json({"blue_hair", "red_eyes"}));
  EXPECT_EQ(j["model_info"]["checkpoint_id"], secat_id_);
  EXPECT_EQ(j["model_info"]["block_kind"], "secat");
  EXPECT_GE(j["model_info"]["inference_ms"].get<double>(), 0.0);
}

TEST_F(ServiceTest, NonSquareInputIsLetterboxedToModelSize) {
  load();
  const auto r = post_json({{"image", b64(sketch_png(120, 48))},
                            {"tags", "pink_hair, aqua_eyes"},
                            {"real_sketch", true}});
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(decode_b64_png(json::parse(r->body)["image"], 3).width, 64);
}

TEST_F(ServiceTest, VariantSelection) {
  load();
  const auto r = post_json({{"image", b64(sketch_png())}, {"tags", {"blue_hair"}}, {"variant", "resnext"}});
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(json::parse(r->body)["model_info"]["block_kind"], "resnext");
  expect_error(post_json({{"image", b64(sketch_png())}, {"variant", "adain"}}), 404,
               "unknown_variant");
}

TEST_F(ServiceTest, UnknownTagIs422NamingTheTag) {
  load();
  const auto r = post_json({{"image", b64(sketch_png())}, {"tags", {"blue_hair", "green_tail"}}});
  expect_error(r, 422, "unknown_tag");
  EXPECT_EQ(json::parse(r->body)["tag"], "green_tail");
  EXPECT_NE(json::parse(r->body)["message"].get<std::string>().find("green_tail"),
            std::string::npos);
  const auto cit = post_json({{"image", b64(sketch_png())}, {"tags", {"hat"}}});
  expect_error(cit, 422, "not_color_tag");
  EXPECT_EQ(json::parse(cit->body)["tag"], "hat");
}

TEST_F(ServiceTest, OversizedImageIs413) {
  load();
  expect_error(post_json({{"image", b64(sketch_png(300, 40))}, {"tags", {"blue_hair"}}}), 413,
               "image_too_large");
  const std::string huge(2u << 20, 'a');
  expect_error(client().Post("/colorize", huge, "application/json"), 413, "payload_too_large");
}

TEST_F(ServiceTest, MalformedRequestsAre400) {
  load();
  expect_error(client().Post("/colorize", "{not json", "application/json"), 400, "bad_request");
  expect_error(post_json({{"tags", {"blue_hair"}}}), 400, "bad_request");
  expect_error(post_json({{"image", "@@@"}}), 400, "invalid_image");
  expect_error(post_json({{"image", b64("not a png")}}), 400, "invalid_image");
  expect_error(post_json({{"image", b64(sketch_png())}, {"tags", 7}}), 400, "bad_request");
  expect_error(client().Get("/nope"), 404, "not_found");
}

TEST_F(ServiceTest, MultipartMatchesJson) {
  load();
  httplib::MultipartFormDataItems items = {
      {"image", sketch_png(), "sketch.png", "image/png"},
      {"tags", "blue_hair,red_eyes", "", ""},
  };
  const auto m = client().Post("/colorize", items);
  ASSERT_TRUE(m);
  ASSERT_EQ(m->status, 200) << m->body;
  const auto j = post_json({{"image", b64(sketch_png())}, {"tags", {"blue_hair", "red_eyes"}}});
  EXPECT_EQ(json::parse(m->body)["image"], json::parse(j->body)["image"]);
}

TEST_F(ServiceTest, ConcurrentIdenticalRequestsGiveIdenticalImages) {
  load();
  const auto body = json{{"image", b64(sketch_png())},
                         {"tags", {"blonde_hair", "purple_eyes", "brown_dress"}}}
                        .dump();
  std::vector<std::string> images(10);
  std::vector<int> status(10, 0);
  std::vector<std::thread> threads;
  for (int i = 0; i < 10; ++i)
    threads.emplace_back([&, i] {
      auto c = client();
      const auto r = c.Post("/colorize", body, "application/json");
      if (!r) return;
      status[i] = r->status;
      images[i] = json::parse(r->body)["image"];
    });
  for (auto& t : threads) t.join();
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(status[i], 200) << i;
    EXPECT_EQ(images[i], images[0]) << i;
  }
}

TEST_F(ServiceTest, AccessLogIsStructured) {
  load();
  client().Get("/health");
  client().Get("/tags");
  std::lock_guard lock(log_mutex_);
  ASSERT_GE(access_log_.size(), 2u);
  const auto j = json::parse(access_log_.back());
  EXPECT_EQ(j["method"], "GET");
  EXPECT_EQ(j["path"], "/tags");
  EXPECT_EQ(j["status"], 200);
}

TEST(ColorizeService, VariantRules) {
  ColorizeService s;
  s.add_variant("secat", model(BlockKind::secat, 1), "a");
  EXPECT_THROW(s.add_variant("secat", model(BlockKind::secat, 1), "a"), std::invalid_argument);
  auto text = vocab().serialize();
  text.replace(text.find("pink_hair"), 9, "teal_hair");
  const auto other = TagVocabulary::parse(text);
  const auto cfg = NetworkConfig::toy(64, 8, BlockKind::resnext, other);
  EXPECT_THROW(s.add_variant("resnext", ModelBundle::create(cfg, other, CitExtractor(cfg)), "b"),
               std::invalid_argument);
  s.mark_ready();
  EXPECT_THROW(s.add_variant("adain", model(BlockKind::adain, 1), "c"), std::logic_error);
  ColorizeService empty;
  EXPECT_THROW(empty.mark_ready(), std::logic_error);
}

TEST(ColorizeService, DefaultFallsBackToFirstVariant) {
  ColorizeService s;
  s.add_variant("adain", model(BlockKind::adain, 1), "x");
  s.mark_ready();
  EXPECT_EQ(s.tags().body["default_variant"], "adain");
  EXPECT_EQ(s.health().body["checkpoint_id"], "x");
}

TEST(ColorizeService, WeightsUnchangedByRequests) {
  ColorizeService s;
  auto m = model(BlockKind::secat, 3);
  const auto id = checkpoint_id(m);
  auto generator = m.generator;
  s.add_variant("secat", std::move(m), id);
  s.mark_ready();
  const auto png = sketch_png();
  ColorizeRequest req;
  req.image.assign(png.begin(), png.end());
  req.tags = {"blue_hair"};
  for (int i = 0; i < 3; ++i) ASSERT_EQ(s.colorize(req).status, 200);
  ModelBundle probe{generator->config, vocab(), generator, nullptr, {}};
  EXPECT_EQ(checkpoint_id(probe), id);
}
