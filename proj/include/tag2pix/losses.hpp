#pragma once

#include <torch/torch.h>

#include <optional>
#include <string_view>

namespace tag2pix {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

struct LossWeights {
  double lambda_rec = 1000.0;
  double lambda_cls = 1.0;
  double beta = 0.9;
  void validate() const;
};

/// Curriculum stage. Runs only move forward through this order.
enum class TrainingStep { segmentation, colorization, brightness_finetune };

std::string_view to_string(TrainingStep step);
std::optional<TrainingStep> parse_training_step(std::string_view s);

/// E[log D(y)] + E[log(1 - D(G))], each expectation a batch mean.
torch::Tensor adv_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake);

/// Generator-side adversarial term. With `non_saturating` the log(1 - D(G))
/// term is replaced by -log D(G); the real-image term is kept either way so
/// the value stays comparable to adv_loss.
torch::Tensor generator_adv_loss(const torch::Tensor& d_real,
                                 const torch::Tensor& d_fake, bool non_saturating);

/// mean|y - g_f| + beta * mean|y - g_g|.
torch::Tensor rec_loss(const torch::Tensor& y, const torch::Tensor& g_full,
                       const torch::Tensor& g_guide, double beta);

/// Per-tag binary negative log-likelihood summed over tags (CVT and CIT) and
/// averaged over the batch. One expectation term of the classification loss.
torch::Tensor cls_loss(const torch::Tensor& cvt_probs, const torch::Tensor& cit_probs,
                       const torch::Tensor& cvt_target, const torch::Tensor& cit_target);

struct LossParts {
  torch::Tensor adv;  ///< adversarial value seen by the discriminator update
  torch::Tensor rec;
  torch::Tensor cls;  ///< undefined when not computed (segmentation step)
  /// Adversarial value for the generator update; defaults to `adv`.
  torch::Tensor g_adv;
};

struct ComposedLosses {
  torch::Tensor d;
  torch::Tensor g;
};

/// segmentation:  L_D = -L_adv,                  L_G = L_adv + λrec L_rec
/// otherwise:     L_D = -L_adv + λcls L_cls,     L_G = L_adv + λcls L_cls + λrec L_rec
/// Throws std::invalid_argument if a classification step lacks `cls`.
ComposedLosses compose_losses(TrainingStep step, const LossParts& parts,
                              const LossWeights& weights);

}  // namespace tag2pix
