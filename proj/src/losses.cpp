#include "tag2pix/losses.hpp"

#include <stdexcept>
#include <string>

namespace tag2pix {
namespace {

torch::Tensor clamp_prob(const torch::Tensor& p) {
  return p.clamp(kProbClamp, 1.0 - kProbClamp);
}

torch::Tensor tag_nll(const torch::Tensor& probs, const torch::Tensor& target) {
  if (probs.sizes() != target.sizes())
    throw std::invalid_argument("cls_loss: probability/target length mismatch");
  const auto p = clamp_prob(probs);
  return -(target * torch::log(p) + (1.0 - target) * torch::log(1.0 - p));
}

}  // namespace

void LossWeights::validate() const {
  if (lambda_rec < 0 || lambda_cls < 0 || beta < 0)
    throw std::invalid_argument("loss weights must be >= 0");
}

std::string_view to_string(TrainingStep step) {
  switch (step) {
    case TrainingStep::segmentation: return "segmentation";
    case TrainingStep::colorization: return "colorization";
    case TrainingStep::brightness_finetune: return "brightness_finetune";
  }
  return "segmentation";
}

std::optional<TrainingStep> parse_training_step(std::string_view s) {
  for (auto step : {TrainingStep::segmentation, TrainingStep::colorization,
                    TrainingStep::brightness_finetune})
    if (to_string(step) == s) return step;
  return std::nullopt;
}

torch::Tensor adv_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  return torch::log(clamp_prob(d_real)).mean() +
         torch::log(1.0 - clamp_prob(d_fake)).mean();
}

torch::Tensor generator_adv_loss(const torch::Tensor& d_real,
                                 const torch::Tensor& d_fake, bool non_saturating) {
  if (!non_saturating) return adv_loss(d_real, d_fake);
  return torch::log(clamp_prob(d_real)).mean() -
         torch::log(clamp_prob(d_fake)).mean();
}

torch::Tensor rec_loss(const torch::Tensor& y, const torch::Tensor& g_full,
                       const torch::Tensor& g_guide, double beta) {
  if (y.sizes() != g_full.sizes() || y.sizes() != g_guide.sizes())
    throw std::invalid_argument("rec_loss: shape mismatch");
  return (y - g_full).abs().mean() + beta * (y - g_guide).abs().mean();
}

torch::Tensor cls_loss(const torch::Tensor& cvt_probs, const torch::Tensor& cit_probs,
                       const torch::Tensor& cvt_target, const torch::Tensor& cit_target) {
  auto per_sample = tag_nll(cvt_probs, cvt_target).sum(-1) +
                    tag_nll(cit_probs, cit_target).sum(-1);
  return per_sample.mean();
}

ComposedLosses compose_losses(TrainingStep step, const LossParts& parts,
                              const LossWeights& weights) {
  const auto& g_adv = parts.g_adv.defined() ? parts.g_adv : parts.adv;
  if (step == TrainingStep::segmentation) {
    return {-parts.adv, g_adv + weights.lambda_rec * parts.rec};
  }
  if (!parts.cls.defined())
    throw std::invalid_argument("compose_losses: step " +
                                std::string(to_string(step)) + " requires L_cls");
  return {-parts.adv + weights.lambda_cls * parts.cls,
          g_adv + weights.lambda_cls * parts.cls + weights.lambda_rec * parts.rec};
}

}  // namespace tag2pix
