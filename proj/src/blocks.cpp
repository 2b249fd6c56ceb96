#include "tag2pix/blocks.hpp"

#include <stdexcept>
#include <string>

namespace tag2pix {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

constexpr double kSlope = 0.2;

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kSlope));
}

torch::Tensor broadcast_style(const torch::Tensor& style,
                              const torch::Tensor& like) {
  return style.unsqueeze(-1).unsqueeze(-1).expand(
      {style.size(0), style.size(1), like.size(2), like.size(3)});
}

}  // namespace

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::resnext: return "resnext";
    case BlockKind::se_resnext: return "se_resnext";
    case BlockKind::concat_front: return "concat_front";
    case BlockKind::concat_all: return "concat_all";
    case BlockKind::adain: return "adain";
    case BlockKind::secat: return "secat";
  }
  return "resnext";
}

std::optional<BlockKind> parse_block_kind(std::string_view name) {
  for (auto k : kAllBlockKinds)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

bool uses_style(BlockKind kind) {
  return kind != BlockKind::resnext && kind != BlockKind::se_resnext;
}

torch::Tensor squeeze(const torch::Tensor& features) {
  if (features.dim() != 4 || features.size(2) < 1 || features.size(3) < 1)
    throw std::invalid_argument("squeeze: expected N x C x H x W with H,W >= 1");
  return features.mean({2, 3});
}

ExcitationImpl::ExcitationImpl(std::int64_t channels_, std::int64_t style_dim_,
                               std::int64_t reduction)
    : channels(channels_),
      style_dim(style_dim_),
      hidden(std::max<std::int64_t>(1, (channels_ + style_dim_) / reduction)) {
  if (channels <= 0 || style_dim < 0 || reduction <= 0)
    throw std::invalid_argument("Excitation: invalid sizes");
  reduce = register_module("reduce", nn::Linear(channels + style_dim, hidden));
  expand = register_module("expand", nn::Linear(hidden, channels));
}

torch::Tensor ExcitationImpl::forward(const torch::Tensor& pooled,
                                      const torch::Tensor& style) {
  if (pooled.dim() != 2 || pooled.size(1) != channels)
    throw std::invalid_argument("excite: pooled length " +
                                std::to_string(pooled.size(-1)) +
                                " != channels " + std::to_string(channels));
  torch::Tensor z = pooled;
  const std::int64_t got = style.defined() ? style.size(-1) : 0;
  if (got != style_dim)
    throw std::invalid_argument("excite: style length " + std::to_string(got) +
                                " != " + std::to_string(style_dim));
  if (style_dim > 0) z = torch::cat({pooled, style}, 1);
  return torch::sigmoid(expand(torch::relu(reduce(z))));
}

DecoderBlockImpl::DecoderBlockImpl(BlockKind kind_,
                                   const DecoderBlockOptions& options_)
    : kind(kind_), options(options_) {
  const auto c = options.channels;
  const auto w = options.bottleneck;
  const auto s = options.style_dim;
  if (c <= 0 || w <= 0 || options.cardinality <= 0)
    throw std::invalid_argument("DecoderBlock: non-positive width");
  const bool front = kind == BlockKind::concat_front || kind == BlockKind::concat_all;
  const bool all = kind == BlockKind::concat_all;
  const auto in_reduce = c + (front ? s : 0);
  const auto in_grouped = w + (all ? s : 0);
  const auto in_restore = w + (all ? s : 0);
  if (in_grouped % options.cardinality != 0 || w % options.cardinality != 0)
    throw std::invalid_argument(
        "DecoderBlock: grouped conv widths must be divisible by cardinality");

  reduce = register_module(
      "reduce", nn::Conv2d(nn::Conv2dOptions(in_reduce, w, 1)));
  grouped = register_module(
      "grouped", nn::Conv2d(nn::Conv2dOptions(in_grouped, w, 3)
                                .padding(1)
                                .groups(options.cardinality)));
  restore = register_module(
      "restore", nn::Conv2d(nn::Conv2dOptions(in_restore, c, 1)));
  switch (kind) {
    case BlockKind::se_resnext:
      excite = register_module("excite", Excitation(c, 0, options.reduction));
      break;
    case BlockKind::secat:
      excite = register_module("excite", Excitation(c, s, options.reduction));
      break;
    case BlockKind::adain:
      affine = register_module("affine", nn::Linear(s, 2 * c));
      break;
    default:
      break;
  }
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& x,
                                        const torch::Tensor& style) {
  if (x.dim() != 4 || x.size(1) != options.channels)
    throw std::invalid_argument("DecoderBlock: expected " +
                                std::to_string(options.channels) +
                                " input channels");
  if (uses_style(kind)) {
    if (!style.defined() || style.dim() != 2 ||
        style.size(1) != options.style_dim || style.size(0) != x.size(0))
      throw std::invalid_argument("DecoderBlock: style must be N x " +
                                  std::to_string(options.style_dim));
  }
  torch::Tensor wide;
  auto with_style = [&](const torch::Tensor& t) {
    if (!wide.defined() || wide.size(2) != t.size(2) || wide.size(3) != t.size(3))
      wide = broadcast_style(style, t);
    return torch::cat({t, wide}, 1);
  };

  const bool front = kind == BlockKind::concat_front || kind == BlockKind::concat_all;
  const bool all = kind == BlockKind::concat_all;
  auto r = lrelu(reduce(front ? with_style(x) : x));
  r = lrelu(grouped(all ? with_style(r) : r));
  r = restore(all ? with_style(r) : r);

  switch (kind) {
    case BlockKind::se_resnext:
      r = r * excite(tag2pix::squeeze(r)).unsqueeze(-1).unsqueeze(-1);
      break;
    case BlockKind::secat:
      r = r * excite(tag2pix::squeeze(r), style).unsqueeze(-1).unsqueeze(-1);
      break;
    case BlockKind::adain: {
      const auto params = affine(style);
      const auto scale = params.narrow(1, 0, options.channels);
      const auto bias = params.narrow(1, options.channels, options.channels);
      r = instance_normalize(r) * scale.unsqueeze(-1).unsqueeze(-1) +
          bias.unsqueeze(-1).unsqueeze(-1);
      break;
    }
    default:
      break;
  }
  return lrelu(x + r);
}

torch::Tensor instance_normalize(const torch::Tensor& x, double eps) {
  const auto mean = x.mean({2, 3}, /*keepdim=*/true);
  const auto var = (x - mean).pow(2).mean({2, 3}, /*keepdim=*/true);
  return (x - mean) / torch::sqrt(var + eps);
}

std::int64_t count_params(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters(/*recurse=*/true))
    if (p.requires_grad()) n += p.numel();
  return n;
}

}  // namespace tag2pix
