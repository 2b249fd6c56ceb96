#pragma once

#include <torch/torch.h>

#include <array>
#include <optional>
#include <string_view>

namespace tag2pix {

/// Decoder block variants compared in the embedding ablation.
enum class BlockKind { resnext, se_resnext, concat_front, concat_all, adain, secat };

inline constexpr std::array<BlockKind, 6> kAllBlockKinds{
    BlockKind::resnext,    BlockKind::se_resnext, BlockKind::concat_front,
    BlockKind::concat_all, BlockKind::adain,      BlockKind::secat};

std::string_view to_string(BlockKind kind);
std::optional<BlockKind> parse_block_kind(std::string_view name);

/// Whether the block consumes the CVT style vector.
bool uses_style(BlockKind kind);

/// Spatial global average pooling: N x C x H x W -> N x C.
torch::Tensor squeeze(const torch::Tensor& features);

/// Channel recalibration weights from the pooled descriptor, optionally
/// concatenated with a style vector:
/// cat(pooled, style) -> FC -> ReLU -> FC -> sigmoid.
/// The bottleneck width is max(1, (channels + style_dim) / reduction).
struct ExcitationImpl : torch::nn::Module {
  ExcitationImpl(std::int64_t channels, std::int64_t style_dim,
                 std::int64_t reduction);

  /// `style` may be undefined when style_dim == 0. Returns N x C in (0,1).
  torch::Tensor forward(const torch::Tensor& pooled,
                        const torch::Tensor& style = {});

  std::int64_t channels;
  std::int64_t style_dim;
  std::int64_t hidden;
  torch::nn::Linear reduce{nullptr};
  torch::nn::Linear expand{nullptr};
};
TORCH_MODULE(Excitation);

struct DecoderBlockOptions {
  std::int64_t channels = 64;
  std::int64_t bottleneck = 32;  ///< width of the grouped 3x3 convolution
  std::int64_t cardinality = 8;
  std::int64_t style_dim = 64;
  std::int64_t reduction = 16;
};

/// Aggregated-residual block with a kind-specific way of injecting the CVT
/// style vector. Spatial size and channel count are preserved:
///   r = conv1x1 -> lrelu -> grouped conv3x3 -> lrelu -> conv1x1
///   out = lrelu(x + inject(r))
///
/// concat_front widens the first convolution by style_dim input channels,
/// concat_all widens all three, adain applies a style-derived per-channel
/// affine after instance normalization, se_resnext and secat scale r by
/// an excitation (secat feeds the style into it).
struct DecoderBlockImpl : torch::nn::Module {
  DecoderBlockImpl(BlockKind kind, const DecoderBlockOptions& options);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& style = {});

  BlockKind kind;
  DecoderBlockOptions options;
  torch::nn::Conv2d reduce{nullptr};
  torch::nn::Conv2d grouped{nullptr};
  torch::nn::Conv2d restore{nullptr};
  Excitation excite{nullptr};
  torch::nn::Linear affine{nullptr};
};
TORCH_MODULE(DecoderBlock);

/// Per-(sample, channel) normalization over H x W with biased variance.
torch::Tensor instance_normalize(const torch::Tensor& x, double eps = 1e-5);

/// Number of trainable scalars (parameters with requires_grad).
std::int64_t count_params(const torch::nn::Module& module);

}  // namespace tag2pix
