#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tag2pix/blocks.hpp"
#include "tag2pix/checkpoint.hpp"
#include "tag2pix/eval.hpp"
#include "tag2pix/losses.hpp"
#include "tag2pix/nets.hpp"
#include "tag2pix/synthdata.hpp"

namespace tag2pix {

class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a loss turns non-finite. The last checkpoint written before
/// the failure is kept on disk and named in `last_good`.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::string last_good)
      : std::runtime_error(what), last_good(std::move(last_good)) {}
  std::string last_good;
};

struct TrainSchedule {
  std::int64_t step1_epochs = 10;  ///< segmentation
  std::int64_t step2_epochs = 10;  ///< colorization
  std::int64_t finetune_epochs = 3;
  LossWeights weights;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::int64_t batch_size = 16;
  std::uint64_t seed = 0;
  double brightness_min = 1.0;
  double brightness_max = 7.0;
  bool non_saturating = false;
  bool jitter_line_art = true;
  /// Test images scored after each epoch; 0 means the whole test split.
  std::int64_t eval_limit = 0;

  void validate() const;
  std::int64_t total_epochs() const {
    return step1_epochs + step2_epochs + finetune_epochs;
  }
  /// Step for a 1-based epoch number.
  TrainingStep step_for_epoch(std::int64_t epoch) const;

  /// Key/value text (TOML subset). Keys mirror the field names;
  /// `brightness_range = [lo, hi]`.
  std::string to_toml() const;
  static TrainSchedule from_toml(std::string_view text);
  /// Throws ScheduleError naming the path when it is missing or invalid.
  static TrainSchedule load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// SHA-256 of to_toml(); equal for equal schedules.
  std::string hash() const;
};

struct LossRecord {
  std::int64_t iter = 0;
  std::int64_t epoch = 0;
  TrainingStep step = TrainingStep::segmentation;
  double adv = 0.0;
  double rec = 0.0;
  std::optional<double> cls;
  double d = 0.0;
  double g = 0.0;
  nlohmann::json to_json() const;
};

struct EpochMetrics {
  double fid_toy = 0.0;
  double tag_fidelity = 0.0;
  double color_bleed = 0.0;
  double d_cvt_accuracy = 0.0;  ///< per-CVT accuracy of D on real test images
};

struct EpochSnapshot {
  std::int64_t epoch = 0;
  TrainingStep step = TrainingStep::segmentation;
  double mean_adv = 0.0;
  double mean_rec = 0.0;
  double mean_d = 0.0;
  double mean_g = 0.0;
  std::optional<EpochMetrics> metrics;
  std::string checkpoint;
  double seconds = 0.0;
  nlohmann::json to_json() const;
};

struct RunLog {
  std::vector<LossRecord> iterations;
  std::vector<EpochSnapshot> epochs;
  std::vector<std::string> checkpoints;
  double wall_seconds = 0.0;

  /// Throws std::logic_error if iterations are not strictly increasing or a
  /// checkpoint reference does not exist on disk.
  void validate() const;
  /// Epoch with the lowest fid_toy among evaluated epochs.
  const EpochSnapshot* best_fid_epoch() const;
};

struct TrainOptions {
  /// Run directory: config.json, schedule.toml, log.jsonl, ckpt/epoch_{n}.
  /// Empty keeps everything in memory (no checkpoints).
  std::filesystem::path run_dir;
  /// Score the test split after every epoch.
  bool evaluate = true;
  std::function<void(const std::string&)> log;
  /// Replace L_G with NaN at this iteration (exercises the abort path).
  std::optional<std::int64_t> inject_nan_at;
};

struct TrainResult {
  RunLog log;
  ModelBundle model;
  std::string final_checkpoint;
};

/// Runs step1 epochs of segmentation losses, step2 epochs of colorization
/// losses, then the brightness fine-tune (colorization losses with line art
/// scaled by f ~ U(brightness range), generator inputs only). One D update
/// then one G update per batch. Networks are initialized from the schedule
/// seed, so equal inputs give equal runs on a single CPU thread.
TrainResult train(const Dataset& dataset, const NetworkConfig& config,
                  const TrainSchedule& schedule, CitExtractor cit,
                  const TrainOptions& options = {});

/// Generator inference on line art with the given CVT tags.
GeneratorOutput colorize(Generator& generator, const Image& line_art,
                         const TagVector& cvt);

/// Metrics of `model` on (up to `limit`) test records.
EpochMetrics evaluate_model(ModelBundle& model, const Dataset& dataset,
                            std::int64_t limit = 0);

/// Default FID feature extractor: pooled CIT trunk over luminance.
class CitFeatureExtractor : public FeatureExtractor {
 public:
  explicit CitFeatureExtractor(CitExtractor cit) : cit_(std::move(cit)) {}
  int input_size() const override;
  int input_channels() const override { return 1; }
  std::size_t dim() const override;
  std::vector<std::vector<double>> extract(const std::vector<Image>& images) override;

 private:
  CitExtractor cit_;
};

/// One generator per kind under the same seed and schedule; each row holds
/// the metrics of the epoch with the lowest fid_toy. A failing kind gets an
/// error row and the rest still run.
EvalReport ablate(const Dataset& dataset, const NetworkConfig& base,
                  const std::vector<BlockKind>& kinds, const TrainSchedule& schedule,
                  CitExtractor cit, const TrainOptions& options = {});

struct CurriculumRow {
  std::string arm;  ///< "two_step" or "single_step"
  std::uint64_t seed = 0;
  double color_bleed = 0.0;
  double tag_fidelity = 0.0;
  double fid_toy = 0.0;
};

struct CurriculumReport {
  std::vector<CurriculumRow> rows;
  std::string schedule_hash;
  int seeds_two_step_bleeds_less = 0;
  int seed_count = 0;
  /// Two-step bleed <= single-step bleed in a majority of seeds. Recorded,
  /// not asserted.
  bool direction_observed = false;

  std::string to_json() const;
  std::string to_table() const;
};

/// Two-step arm (step1, step2, 0) against a single-step arm
/// (0, step1 + step2, 0), same seed per pair, final-epoch metrics.
CurriculumReport compare_curricula(const Dataset& dataset, const NetworkConfig& config,
                                   const TrainSchedule& schedule, CitExtractor cit,
                                   const std::vector<std::uint64_t>& seeds,
                                   const TrainOptions& options = {});

}  // namespace tag2pix
