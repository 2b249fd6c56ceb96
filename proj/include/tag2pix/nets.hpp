#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tag2pix/blocks.hpp"
#include "tag2pix/image.hpp"
#include "tag2pix/lineart.hpp"
#include "tag2pix/synthdata.hpp"
#include "tag2pix/tagspace.hpp"

namespace tag2pix {

/// Shapes and widths of the generator, discriminator and CIT extractor.
///
/// The fusion tensor at image_size/8 concatenates the U-Net encoder output,
/// the CIT feature map and the spatial CVT embedding; its depth is the sum of
/// the three widths.
struct NetworkConfig {
  std::int64_t image_size = 64;
  std::int64_t base_channels = 16;
  std::int64_t encoder_channels = 64;
  std::int64_t cit_channels = 64;
  std::int64_t cvt_spatial_channels = 16;
  std::int64_t style_dim = 64;
  std::array<std::int64_t, 3> decoder_channels{64, 32, 32};
  std::int64_t cardinality = 8;
  std::int64_t se_reduction = 16;
  BlockKind block_kind = BlockKind::secat;
  std::int64_t cvt_count = 12;
  std::int64_t cit_count = 6;

  std::int64_t fusion_spatial() const { return image_size / 8; }
  std::int64_t fusion_depth() const {
    return encoder_channels + cit_channels + cvt_spatial_channels;
  }

  /// Throws std::invalid_argument on inconsistent shapes.
  void validate() const;

  /// Desk-scale widths: encoder 4b, CIT 4b, CVT-spatial b (the 4:4:1 split of
  /// the full-size fusion), decoder blocks {4b, 2b, 2b}.
  static NetworkConfig toy(std::int64_t image_size, std::int64_t base_channels,
                           BlockKind kind, const TagVocabulary& vocab,
                           std::int64_t style_dim = 64);

  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Sub-pixel upsampling:
/// out[n, c, r*y + dy, r*x + dx] = in[n, c*r*r + dy*r + dx, y, x].
torch::Tensor pixel_shuffle(const torch::Tensor& x, std::int64_t r);

/// Image tensors: line art (1 channel) and color (3 channels), scaled to
/// [-1, 1], batched NCHW.
torch::Tensor image_to_tensor(const Image& image);
torch::Tensor images_to_batch(const std::vector<const Image*>& images);
/// Inverse of image_to_tensor for a single C x H x W tensor in [-1,1].
Image tensor_to_image(const torch::Tensor& chw);

torch::Tensor tags_to_tensor(const TagVector& tags);

/// Squeeze-excitation residual unit used by the CIT extractor.
struct SeResidualImpl : torch::nn::Module {
  SeResidualImpl(std::int64_t channels, std::int64_t reduction);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  Excitation excite{nullptr};
};
TORCH_MODULE(SeResidual);

struct CitFeatures {
  torch::Tensor features;  ///< N x cit_channels x S/8 x S/8, post-ReLU
  bool untrained = false;
};

/// Four-stage SE-residual multi-label CIT classifier over line art. The
/// third stage (1/8 resolution) is the feature map handed to the generator.
struct CitExtractorImpl : torch::nn::Module {
  explicit CitExtractorImpl(const NetworkConfig& config);

  /// Trunk up to the 1/8 stage.
  torch::Tensor features(const torch::Tensor& line_art);
  CitFeatures extract(const torch::Tensor& line_art);
  /// Per-CIT logits.
  torch::Tensor forward(const torch::Tensor& line_art);
  /// Global-average-pooled trunk features, N x cit_channels.
  torch::Tensor pooled(const torch::Tensor& line_art);

  void set_frozen(bool frozen);

  NetworkConfig config;
  bool pretrained = false;
  torch::nn::Sequential stem{nullptr}, stage1{nullptr}, stage2{nullptr},
      stage3{nullptr}, stage4{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(CitExtractor);

/// CVT embedding: an FC path to the style vector and an FC-reshape-conv path
/// to a spatial map at the fusion resolution.
struct CvtEncoderImpl : torch::nn::Module {
  explicit CvtEncoderImpl(const NetworkConfig& config);
  /// Returns {spatial N x cvt_spatial_channels x F x F, style N x style_dim}.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& cvt);

  NetworkConfig config;
  torch::nn::Linear style1{nullptr}, style2{nullptr}, to_grid{nullptr};
  torch::nn::Conv2d grid1{nullptr}, grid2{nullptr};
};
TORCH_MODULE(CvtEncoder);

struct GeneratorOutput {
  torch::Tensor full;   ///< G_f, N x 3 x S x S in [-1,1]
  torch::Tensor guide;  ///< G_g, N x 3 x S x S in [-1,1]
};

/// One decoder stage: 1x1 entry projection, decoder block, conv to 4x width
/// and pixel shuffle x2.
struct DecoderStageImpl : torch::nn::Module {
  DecoderStageImpl(std::int64_t in_channels, std::int64_t block_channels,
                   std::int64_t out_channels, const NetworkConfig& config);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& style);
  torch::nn::Conv2d entry{nullptr}, up{nullptr};
  DecoderBlock block{nullptr};
};
TORCH_MODULE(DecoderStage);

/// U-Net colorizer conditioned on CIT features (frozen extractor) and CVTs,
/// with a guide decoder branching after the first decoder stage.
struct GeneratorImpl : torch::nn::Module {
  GeneratorImpl(const NetworkConfig& config, CitExtractor cit);

  GeneratorOutput forward(const torch::Tensor& line_art, const torch::Tensor& cvt);

  /// Trainable parameters (excludes the frozen CIT extractor).
  std::vector<torch::Tensor> trainable_parameters();

  NetworkConfig config;
  CitExtractor cit{nullptr};
  CvtEncoder cvt_encoder{nullptr};
  torch::nn::Conv2d enc1{nullptr}, enc2{nullptr}, enc3{nullptr}, enc4{nullptr};
  DecoderStage dec1{nullptr}, dec2{nullptr}, dec3{nullptr};
  torch::nn::Conv2d out1{nullptr}, out2{nullptr};
  torch::nn::Conv2d guide_up1{nullptr}, guide_up2{nullptr}, guide_out{nullptr};
};
TORCH_MODULE(Generator);

struct DiscriminatorOutput {
  torch::Tensor adv;        ///< N, in (0,1)
  torch::Tensor cvt_probs;  ///< N x cvt_count
  torch::Tensor cit_probs;  ///< N x cit_count
};

/// Five stride-2 stages, global pooling, then adversarial and per-tag heads.
struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(const NetworkConfig& config);
  DiscriminatorOutput forward(const torch::Tensor& color);
  /// Parameters of the CVT and CIT classification heads.
  std::vector<torch::Tensor> classification_parameters();

  NetworkConfig config;
  torch::nn::Sequential trunk{nullptr};
  torch::nn::Linear adv_head{nullptr}, cvt_head{nullptr}, cit_head{nullptr};
};
TORCH_MODULE(Discriminator);

struct CitPretrainOptions {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool jitter_line_art = true;
};

struct CitTagMetrics {
  std::string tag;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
};

struct CitPretrainResult {
  CitExtractor extractor{nullptr};
  double initial_loss = 0.0;           ///< train loss before the first update
  std::vector<double> epoch_losses;    ///< mean train BCE per epoch
  std::vector<CitTagMetrics> test_metrics;
  double mean_test_accuracy = 0.0;
};

/// Trains the CIT extractor with per-tag binary cross-entropy on the train
/// split and reports per-tag precision/recall on the test split. Throws
/// std::invalid_argument for an empty dataset.
CitPretrainResult pretrain_cit(const Dataset& dataset, const NetworkConfig& config,
                               const CitPretrainOptions& options,
                               const std::function<void(const std::string&)>& log = {});

/// Line art handed to the networks: XDoG of the record's color image with
/// the given parameters.
Image extract_line_art(const SampleRecord& record, const XdogParams& params);

}  // namespace tag2pix
