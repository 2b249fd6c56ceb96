#include "tag2pix/nets.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tag2pix {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

constexpr double kSlope = 0.2;

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kSlope));
}

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k,
                std::int64_t stride = 1) {
  const std::int64_t pad = k == 4 ? 1 : k / 2;
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad));
}

bool power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void NetworkConfig::validate() const {
  auto fail = [](const std::string& m) {
    throw std::invalid_argument("NetworkConfig: " + m);
  };
  if (!power_of_two(image_size) || image_size < 16)
    fail("image_size must be a power of two >= 16");
  if (image_size % 8 != 0) fail("image_size must be divisible by 8");
  if (base_channels <= 0 || encoder_channels <= 0 || cit_channels <= 0 ||
      cvt_spatial_channels <= 0 || style_dim <= 0)
    fail("channel widths must be positive");
  if (cvt_count <= 0 || cit_count <= 0) fail("vocabulary sizes must be positive");
  for (auto c : decoder_channels) {
    if (c <= 0 || c % 2 != 0) fail("decoder widths must be positive and even");
    if ((c / 2) % cardinality != 0)
      fail("decoder bottleneck (width/2) must be divisible by cardinality");
  }
}

NetworkConfig NetworkConfig::toy(std::int64_t image_size,
                                 std::int64_t base_channels, BlockKind kind,
                                 const TagVocabulary& vocab,
                                 std::int64_t style_dim) {
  NetworkConfig c;
  const auto b = base_channels;
  c.image_size = image_size;
  c.base_channels = b;
  c.encoder_channels = 4 * b;
  c.cit_channels = 4 * b;
  c.cvt_spatial_channels = b;
  c.style_dim = style_dim;
  c.decoder_channels = {4 * b, 2 * b, 2 * b};
  c.block_kind = kind;
  c.cvt_count = static_cast<std::int64_t>(vocab.cvt_count());
  c.cit_count = static_cast<std::int64_t>(vocab.cit_count());
  c.validate();
  return c;
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"image_size", image_size},
          {"base_channels", base_channels},
          {"encoder_channels", encoder_channels},
          {"cit_channels", cit_channels},
          {"cvt_spatial_channels", cvt_spatial_channels},
          {"style_dim", style_dim},
          {"decoder_channels", decoder_channels},
          {"cardinality", cardinality},
          {"se_reduction", se_reduction},
          {"block_kind", std::string(to_string(block_kind))},
          {"cvt_count", cvt_count},
          {"cit_count", cit_count}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.image_size = j.at("image_size").get<std::int64_t>();
  c.base_channels = j.at("base_channels").get<std::int64_t>();
  c.encoder_channels = j.at("encoder_channels").get<std::int64_t>();
  c.cit_channels = j.at("cit_channels").get<std::int64_t>();
  c.cvt_spatial_channels = j.at("cvt_spatial_channels").get<std::int64_t>();
  c.style_dim = j.at("style_dim").get<std::int64_t>();
  c.decoder_channels = j.at("decoder_channels").get<std::array<std::int64_t, 3>>();
  c.cardinality = j.at("cardinality").get<std::int64_t>();
  c.se_reduction = j.at("se_reduction").get<std::int64_t>();
  const auto kind = j.at("block_kind").get<std::string>();
  const auto k = parse_block_kind(kind);
  if (!k) throw std::invalid_argument("unknown block kind '" + kind + "'");
  c.block_kind = *k;
  c.cvt_count = j.at("cvt_count").get<std::int64_t>();
  c.cit_count = j.at("cit_count").get<std::int64_t>();
  c.validate();
  return c;
}

torch::Tensor pixel_shuffle(const torch::Tensor& x, std::int64_t r) {
  if (r < 1) throw std::invalid_argument("pixel_shuffle: r must be >= 1");
  if (x.dim() != 4) throw std::invalid_argument("pixel_shuffle: expected NCHW");
  const auto n = x.size(0);
  const auto c = x.size(1);
  const auto h = x.size(2);
  const auto w = x.size(3);
  if (c % (r * r) != 0)
    throw std::invalid_argument("pixel_shuffle: channels " + std::to_string(c) +
                                " not divisible by r^2 = " +
                                std::to_string(r * r));
  const auto oc = c / (r * r);
  return x.reshape({n, oc, r, r, h, w})
      .permute({0, 1, 4, 2, 5, 3})
      .reshape({n, oc, h * r, w * r});
}

torch::Tensor image_to_tensor(const Image& image) {
  auto t = torch::from_blob(const_cast<float*>(image.data.data()),
                            {image.height, image.width, image.channels},
                            torch::kFloat32)
               .permute({2, 0, 1})
               .clone();
  return t * 2.0 - 1.0;
}

torch::Tensor images_to_batch(const std::vector<const Image*>& images) {
  std::vector<torch::Tensor> ts;
  ts.reserve(images.size());
  for (const auto* im : images) ts.push_back(image_to_tensor(*im));
  return torch::stack(ts);
}

Image tensor_to_image(const torch::Tensor& chw) {
  if (chw.dim() != 3) throw std::invalid_argument("tensor_to_image: expected CHW");
  const auto t = ((chw.detach().to(torch::kFloat32).clamp(-1.0, 1.0) + 1.0) * 0.5)
                     .permute({1, 2, 0})
                     .contiguous();
  Image out(static_cast<int>(t.size(1)), static_cast<int>(t.size(0)),
            static_cast<int>(t.size(2)));
  std::copy_n(t.data_ptr<float>(), out.data.size(), out.data.begin());
  return out;
}

torch::Tensor tags_to_tensor(const TagVector& tags) {
  std::vector<float> v(tags.values.begin(), tags.values.end());
  return torch::tensor(v, torch::kFloat32);
}

Image extract_line_art(const SampleRecord& record, const XdogParams& params) {
  return xdog(grayscale(record.color_image), params);
}

SeResidualImpl::SeResidualImpl(std::int64_t channels, std::int64_t reduction) {
  conv1 = register_module("conv1", conv(channels, channels, 3));
  conv2 = register_module("conv2", conv(channels, channels, 3));
  excite = register_module("excite", Excitation(channels, 0, reduction));
}

torch::Tensor SeResidualImpl::forward(const torch::Tensor& x) {
  auto r = conv2(torch::relu(conv1(x)));
  r = r * excite(tag2pix::squeeze(r)).unsqueeze(-1).unsqueeze(-1);
  return torch::relu(x + r);
}

CitExtractorImpl::CitExtractorImpl(const NetworkConfig& cfg) : config(cfg) {
  config.validate();
  const auto b = config.base_channels;
  const auto red = config.se_reduction;
  stem = register_module("stem", nn::Sequential(conv(1, b, 3), nn::ReLU()));
  stage1 = register_module(
      "stage1", nn::Sequential(conv(b, 2 * b, 3, 2), nn::ReLU(), SeResidual(2 * b, red)));
  stage2 = register_module(
      "stage2",
      nn::Sequential(conv(2 * b, 4 * b, 3, 2), nn::ReLU(), SeResidual(4 * b, red)));
  stage3 = register_module(
      "stage3", nn::Sequential(conv(4 * b, config.cit_channels, 3, 2), nn::ReLU(),
                               SeResidual(config.cit_channels, red)));
  stage4 = register_module(
      "stage4",
      nn::Sequential(conv(config.cit_channels, config.cit_channels, 3, 2),
                     nn::ReLU(), SeResidual(config.cit_channels, red)));
  head = register_module("head", nn::Linear(config.cit_channels, config.cit_count));
}

torch::Tensor CitExtractorImpl::features(const torch::Tensor& line_art) {
  if (line_art.dim() != 4 || line_art.size(1) != 1 ||
      line_art.size(2) != config.image_size || line_art.size(3) != config.image_size)
    throw std::invalid_argument("CIT extractor: expected N x 1 x " +
                                std::to_string(config.image_size) + " x " +
                                std::to_string(config.image_size));
  return stage3->forward(stage2->forward(stage1->forward(stem->forward(line_art))));
}

CitFeatures CitExtractorImpl::extract(const torch::Tensor& line_art) {
  return {features(line_art), !pretrained};
}

torch::Tensor CitExtractorImpl::forward(const torch::Tensor& line_art) {
  return head(tag2pix::squeeze(stage4->forward(features(line_art))));
}

torch::Tensor CitExtractorImpl::pooled(const torch::Tensor& line_art) {
  return tag2pix::squeeze(features(line_art));
}

void CitExtractorImpl::set_frozen(bool frozen) {
  for (auto& p : parameters()) p.set_requires_grad(!frozen);
  if (frozen) eval();
}

CvtEncoderImpl::CvtEncoderImpl(const NetworkConfig& cfg) : config(cfg) {
  const auto s = config.style_dim;
  const auto f = config.fusion_spatial();
  const auto c = config.cvt_spatial_channels;
  style1 = register_module("style1", nn::Linear(config.cvt_count, s));
  style2 = register_module("style2", nn::Linear(s, s));
  to_grid = register_module("to_grid", nn::Linear(config.cvt_count, f * f));
  grid1 = register_module("grid1", conv(1, c, 3));
  grid2 = register_module("grid2", conv(c, c, 3));
}

std::pair<torch::Tensor, torch::Tensor> CvtEncoderImpl::forward(
    const torch::Tensor& cvt) {
  if (cvt.dim() != 2 || cvt.size(1) != config.cvt_count)
    throw std::invalid_argument("CVT encoder: expected N x " +
                                std::to_string(config.cvt_count));
  const auto f = config.fusion_spatial();
  auto style = lrelu(style2(lrelu(style1(cvt))));
  auto grid = lrelu(to_grid(cvt)).reshape({cvt.size(0), 1, f, f});
  grid = lrelu(grid2(lrelu(grid1(grid))));
  return {grid, style};
}

DecoderStageImpl::DecoderStageImpl(std::int64_t in_channels,
                                   std::int64_t block_channels,
                                   std::int64_t out_channels,
                                   const NetworkConfig& config) {
  entry = register_module("entry", conv(in_channels, block_channels, 1));
  DecoderBlockOptions o;
  o.channels = block_channels;
  o.bottleneck = block_channels / 2;
  o.cardinality = config.cardinality;
  o.style_dim = config.style_dim;
  o.reduction = config.se_reduction;
  block = register_module("block", DecoderBlock(config.block_kind, o));
  up = register_module("up", conv(block_channels, 4 * out_channels, 3));
}

torch::Tensor DecoderStageImpl::forward(const torch::Tensor& x,
                                        const torch::Tensor& style) {
  auto h = block(lrelu(entry(x)), style);
  return lrelu(tag2pix::pixel_shuffle(up(h), 2));
}

GeneratorImpl::GeneratorImpl(const NetworkConfig& cfg, CitExtractor cit_)
    : config(cfg) {
  config.validate();
  if (!(cit_->config.image_size == config.image_size &&
        cit_->config.cit_channels == config.cit_channels &&
        cit_->config.base_channels == config.base_channels))
    throw std::invalid_argument("Generator: CIT extractor shape mismatch");
  const auto b = config.base_channels;
  const auto& d = config.decoder_channels;
  cit = register_module("cit", std::move(cit_));
  cit->set_frozen(true);
  cvt_encoder = register_module("cvt_encoder", CvtEncoder(config));
  enc1 = register_module("enc1", conv(1, b, 3));
  enc2 = register_module("enc2", conv(b, 2 * b, 4, 2));
  enc3 = register_module("enc3", conv(2 * b, 4 * b, 4, 2));
  enc4 = register_module("enc4", conv(4 * b, config.encoder_channels, 4, 2));
  // Stage outputs: 2b at 1/4, b at 1/2, b at full size; each is concatenated
  // with the encoder skip of matching resolution.
  dec1 = register_module("dec1", DecoderStage(config.fusion_depth(), d[0], 2 * b, config));
  dec2 = register_module("dec2", DecoderStage(2 * b + 4 * b, d[1], b, config));
  dec3 = register_module("dec3", DecoderStage(b + 2 * b, d[2], b, config));
  out1 = register_module("out1", conv(b + b, b, 3));
  out2 = register_module("out2", conv(b, 3, 3));
  guide_up1 = register_module("guide_up1", conv(2 * b, 4 * b, 3));
  guide_up2 = register_module("guide_up2", conv(b, 4 * b, 3));
  guide_out = register_module("guide_out", conv(b, 3, 3));
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& line_art,
                                       const torch::Tensor& cvt) {
  const auto s = config.image_size;
  if (line_art.dim() != 4 || line_art.size(1) != 1 || line_art.size(2) != s ||
      line_art.size(3) != s)
    throw std::invalid_argument("Generator: line art must be N x 1 x " +
                                std::to_string(s) + " x " + std::to_string(s));
  if (cvt.dim() != 2 || cvt.size(0) != line_art.size(0))
    throw std::invalid_argument("Generator: cvt batch mismatch");

  const auto e1 = lrelu(enc1(line_art));
  const auto e2 = lrelu(enc2(e1));
  const auto e3 = lrelu(enc3(e2));
  const auto e4 = lrelu(enc4(e3));
  torch::Tensor cit_map;
  {
    torch::NoGradGuard frozen;
    cit_map = cit->features(line_art);
  }
  auto [cvt_map, style] = cvt_encoder(cvt);
  const auto fused = torch::cat({e4, cit_map, cvt_map}, 1);
  TORCH_CHECK(fused.size(1) == config.fusion_depth(),
              "fusion depth bookkeeping mismatch");

  const auto d1 = dec1(fused, style);
  const auto d2 = dec2(torch::cat({d1, e3}, 1), style);
  const auto d3 = dec3(torch::cat({d2, e2}, 1), style);
  const auto full = torch::tanh(out2(lrelu(out1(torch::cat({d3, e1}, 1)))));

  auto g = lrelu(tag2pix::pixel_shuffle(guide_up1(d1), 2));
  g = lrelu(tag2pix::pixel_shuffle(guide_up2(g), 2));
  const auto guide = torch::tanh(guide_out(g));
  return {full, guide};
}

std::vector<torch::Tensor> GeneratorImpl::trainable_parameters() {
  std::vector<torch::Tensor> out;
  for (auto& p : parameters())
    if (p.requires_grad()) out.push_back(p);
  return out;
}

DiscriminatorImpl::DiscriminatorImpl(const NetworkConfig& cfg) : config(cfg) {
  config.validate();
  const auto b = config.base_channels;
  const std::array<std::int64_t, 5> widths{b, 2 * b, 4 * b, 8 * b, 8 * b};
  trunk = nn::Sequential();
  std::int64_t in = 3;
  for (auto w : widths) {
    trunk->push_back(conv(in, w, 3, 2));
    trunk->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kSlope)));
    in = w;
  }
  trunk = register_module("trunk", trunk);
  adv_head = register_module("adv_head", nn::Linear(in, 1));
  cvt_head = register_module("cvt_head", nn::Linear(in, config.cvt_count));
  cit_head = register_module("cit_head", nn::Linear(in, config.cit_count));
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& color) {
  const auto s = config.image_size;
  if (color.dim() != 4 || color.size(1) != 3 || color.size(2) != s ||
      color.size(3) != s)
    throw std::invalid_argument("Discriminator: expected N x 3 x " +
                                std::to_string(s) + " x " + std::to_string(s));
  const auto h = tag2pix::squeeze(trunk->forward(color));
  return {torch::sigmoid(adv_head(h)).squeeze(1), torch::sigmoid(cvt_head(h)),
          torch::sigmoid(cit_head(h))};
}

std::vector<torch::Tensor> DiscriminatorImpl::classification_parameters() {
  std::vector<torch::Tensor> out;
  for (auto& p : cvt_head->parameters()) out.push_back(p);
  for (auto& p : cit_head->parameters()) out.push_back(p);
  return out;
}

CitPretrainResult pretrain_cit(const Dataset& dataset, const NetworkConfig& config,
                               const CitPretrainOptions& options,
                               const std::function<void(const std::string&)>& log) {
  const auto train_idx = dataset.indices(false);
  const auto test_idx = dataset.indices(true);
  if (train_idx.empty()) throw std::invalid_argument("pretrain_cit: empty dataset");
  if (dataset.image_size() != config.image_size)
    throw std::invalid_argument("pretrain_cit: dataset size != network size");

  torch::manual_seed(options.seed);
  std::mt19937_64 rng(options.seed);
  CitPretrainResult result;
  result.extractor = CitExtractor(config);
  auto& net = result.extractor;
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(options.lr));
  const auto base = sprite_default_xdog(static_cast<int>(config.image_size));

  auto batch_for = [&](const std::vector<std::size_t>& idx, std::size_t begin,
                       std::size_t end, bool jitter) {
    std::vector<Image> arts;
    std::vector<torch::Tensor> targets;
    for (std::size_t k = begin; k < end; ++k) {
      const auto& rec = dataset.records[idx[k]];
      arts.push_back(jitter ? extract_line_art(rec, jitter_xdog(base, rng))
                            : rec.line_art);
      targets.push_back(tags_to_tensor(rec.cit));
    }
    std::vector<const Image*> ptrs;
    for (const auto& a : arts) ptrs.push_back(&a);
    return std::make_pair(images_to_batch(ptrs), torch::stack(targets));
  };

  auto mean_loss = [&](const std::vector<std::size_t>& idx) {
    torch::NoGradGuard ng;
    double total = 0.0;
    for (std::size_t b = 0; b < idx.size(); b += options.batch_size) {
      const auto e = std::min(idx.size(), b + options.batch_size);
      auto [x, y] = batch_for(idx, b, e, false);
      total += F::binary_cross_entropy_with_logits(
                   net->forward(x), y,
                   F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kSum))
                   .item<double>();
    }
    return total / static_cast<double>(idx.size() * config.cit_count);
  };

  result.initial_loss = mean_loss(train_idx);
  auto order = train_idx;
  for (std::int64_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
      const auto e = std::min(order.size(), b + options.batch_size);
      auto [x, y] = batch_for(order, b, e, options.jitter_line_art);
      opt.zero_grad();
      auto loss = F::binary_cross_entropy_with_logits(net->forward(x), y);
      loss.backward();
      opt.step();
      total += loss.item<double>() * static_cast<double>(e - b);
      count += e - b;
    }
    result.epoch_losses.push_back(total / static_cast<double>(count));
    if (log)
      log("pretrain-cit epoch " + std::to_string(epoch + 1) + " loss " +
          std::to_string(result.epoch_losses.back()));
  }

  const auto& eval_idx = test_idx.empty() ? train_idx : test_idx;
  std::vector<std::int64_t> tp(config.cit_count), fp(config.cit_count),
      fn(config.cit_count), correct(config.cit_count);
  {
    torch::NoGradGuard ng;
    net->eval();
    for (std::size_t b = 0; b < eval_idx.size(); b += options.batch_size) {
      const auto e = std::min(eval_idx.size(), b + options.batch_size);
      auto [x, y] = batch_for(eval_idx, b, e, false);
      const auto pred = (net->forward(x) > 0).to(torch::kFloat32);
      for (std::int64_t i = 0; i < pred.size(0); ++i)
        for (std::int64_t t = 0; t < config.cit_count; ++t) {
          const bool p = pred[i][t].item<float>() > 0.5f;
          const bool g = y[i][t].item<float>() > 0.5f;
          tp[t] += p && g;
          fp[t] += p && !g;
          fn[t] += !p && g;
          correct[t] += p == g;
        }
    }
  }
  double acc_sum = 0.0;
  for (std::int64_t t = 0; t < config.cit_count; ++t) {
    CitTagMetrics m;
    m.tag = dataset.vocab.cit_names().at(static_cast<std::size_t>(t));
    m.precision = tp[t] + fp[t] ? double(tp[t]) / double(tp[t] + fp[t]) : 0.0;
    m.recall = tp[t] + fn[t] ? double(tp[t]) / double(tp[t] + fn[t]) : 0.0;
    m.accuracy = double(correct[t]) / double(eval_idx.size());
    acc_sum += m.accuracy;
    result.test_metrics.push_back(m);
  }
  result.mean_test_accuracy = acc_sum / static_cast<double>(config.cit_count);
  net->pretrained = true;
  net->set_frozen(true);
  return result;
}

}  // namespace tag2pix
