#include "tag2pix/training.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "tag2pix/digest.hpp"
#include "tag2pix/lineart.hpp"

namespace tag2pix {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ScheduleError("schedule key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ScheduleError("schedule key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ScheduleError("schedule key '" + key + "': expected true or false, got '" + v + "'");
}

struct Batch {
  torch::Tensor line_art;
  torch::Tensor color;
  torch::Tensor cvt;
  torch::Tensor cit;
};

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end, const XdogParams* base, std::mt19937_64* rng,
                 double brightness) {
  std::vector<Image> arts;
  std::vector<const Image*> colors;
  std::vector<torch::Tensor> cvts, cits;
  for (std::size_t k = begin; k < end; ++k) {
    const auto& rec = ds.records[order[k]];
    Image art = base ? extract_line_art(rec, jitter_xdog(*base, *rng)) : rec.line_art;
    if (brightness != 1.0) art = brightness_scale(art, brightness);
    arts.push_back(std::move(art));
    colors.push_back(&rec.color_image);
    cvts.push_back(tags_to_tensor(rec.cvt));
    cits.push_back(tags_to_tensor(rec.cit));
  }
  std::vector<const Image*> art_ptrs;
  for (const auto& a : arts) art_ptrs.push_back(&a);
  return {images_to_batch(art_ptrs), images_to_batch(colors), torch::stack(cvts),
          torch::stack(cits)};
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path) {
    if (!path.empty()) out_.open(path, std::ios::trunc);
  }
  void write(const nlohmann::json& j) {
    if (out_.is_open()) out_ << j.dump() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

std::vector<std::size_t> limited_test_indices(const Dataset& ds, std::int64_t limit) {
  auto idx = ds.indices(true);
  if (idx.size() < 2) idx = ds.indices(false);
  if (limit > 0 && idx.size() > static_cast<std::size_t>(limit))
    idx.resize(static_cast<std::size_t>(limit));
  return idx;
}

}  // namespace

void TrainSchedule::validate() const {
  if (step1_epochs < 0 || step2_epochs < 0 || finetune_epochs < 0)
    throw ScheduleError("schedule: epoch counts must be >= 0");
  if (total_epochs() == 0) throw ScheduleError("schedule: at least one epoch required");
  if (!(lr > 0)) throw ScheduleError("schedule: lr must be > 0");
  if (batch_size < 1) throw ScheduleError("schedule: batch_size must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
    throw ScheduleError("schedule: Adam betas must lie in [0, 1)");
  if (brightness_min < 1.0 || brightness_max < brightness_min)
    throw ScheduleError("schedule: brightness_range must satisfy 1 <= lo <= hi");
  if (eval_limit < 0) throw ScheduleError("schedule: eval_limit must be >= 0");
  try {
    weights.validate();
  } catch (const std::invalid_argument& e) {
    throw ScheduleError(std::string("schedule: ") + e.what());
  }
}

TrainingStep TrainSchedule::step_for_epoch(std::int64_t epoch) const {
  if (epoch <= step1_epochs) return TrainingStep::segmentation;
  if (epoch <= step1_epochs + step2_epochs) return TrainingStep::colorization;
  return TrainingStep::brightness_finetune;
}

std::string TrainSchedule::to_toml() const {
  std::ostringstream o;
  o << "# tag2pix training schedule\n"
    << "step1_epochs = " << step1_epochs << "\n"
    << "step2_epochs = " << step2_epochs << "\n"
    << "finetune_epochs = " << finetune_epochs << "\n"
    << "lambda_rec = " << fmt(weights.lambda_rec) << "\n"
    << "lambda_cls = " << fmt(weights.lambda_cls) << "\n"
    << "beta = " << fmt(weights.beta) << "\n"
    << "lr = " << fmt(lr) << "\n"
    << "beta1 = " << fmt(beta1) << "\n"
    << "beta2 = " << fmt(beta2) << "\n"
    << "batch_size = " << batch_size << "\n"
    << "seed = " << seed << "\n"
    << "brightness_range = [" << fmt(brightness_min) << ", " << fmt(brightness_max) << "]\n"
    << "non_saturating = " << (non_saturating ? "true" : "false") << "\n"
    << "jitter_line_art = " << (jitter_line_art ? "true" : "false") << "\n"
    << "eval_limit = " << eval_limit << "\n";
  return o.str();
}

TrainSchedule TrainSchedule::from_toml(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ScheduleError(std::string("schedule: ") + e.what());
  }
  TrainSchedule s;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    const auto key = item.fullname();
    if (!item.parents.empty()) throw ScheduleError("unknown schedule key '" + key + "'");
    if (key == "brightness_range") {
      if (item.inputs.size() != 2)
        throw ScheduleError("schedule key 'brightness_range': expected [lo, hi]");
      s.brightness_min = parse_double(key, item.inputs[0]);
      s.brightness_max = parse_double(key, item.inputs[1]);
      continue;
    }
    if (item.inputs.size() != 1)
      throw ScheduleError("schedule key '" + key + "': expected a single value");
    const auto& v = item.inputs[0];
    if (key == "step1_epochs") s.step1_epochs = parse_int(key, v);
    else if (key == "step2_epochs") s.step2_epochs = parse_int(key, v);
    else if (key == "finetune_epochs") s.finetune_epochs = parse_int(key, v);
    else if (key == "lambda_rec") s.weights.lambda_rec = parse_double(key, v);
    else if (key == "lambda_cls") s.weights.lambda_cls = parse_double(key, v);
    else if (key == "beta") s.weights.beta = parse_double(key, v);
    else if (key == "lr") s.lr = parse_double(key, v);
    else if (key == "beta1") s.beta1 = parse_double(key, v);
    else if (key == "beta2") s.beta2 = parse_double(key, v);
    else if (key == "batch_size") s.batch_size = parse_int(key, v);
    else if (key == "seed") s.seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "non_saturating") s.non_saturating = parse_bool(key, v);
    else if (key == "jitter_line_art") s.jitter_line_art = parse_bool(key, v);
    else if (key == "eval_limit") s.eval_limit = parse_int(key, v);
    else throw ScheduleError("unknown schedule key '" + key + "'");
  }
  s.validate();
  return s;
}

TrainSchedule TrainSchedule::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ScheduleError("schedule file not found: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return from_toml(ss.str());
  } catch (const ScheduleError& e) {
    throw ScheduleError(path.string() + ": " + e.what());
  }
}

nlohmann::json TrainSchedule::to_json() const {
  return {{"step1_epochs", step1_epochs},
          {"step2_epochs", step2_epochs},
          {"finetune_epochs", finetune_epochs},
          {"lambda_rec", weights.lambda_rec},
          {"lambda_cls", weights.lambda_cls},
          {"beta", weights.beta},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"batch_size", batch_size},
          {"seed", seed},
          {"brightness_range", {brightness_min, brightness_max}},
          {"non_saturating", non_saturating},
          {"jitter_line_art", jitter_line_art},
          {"eval_limit", eval_limit}};
}

std::string TrainSchedule::hash() const { return sha256_hex(to_toml()); }

nlohmann::json LossRecord::to_json() const {
  return {{"type", "loss"},
          {"iter", iter},
          {"epoch", epoch},
          {"step", std::string(to_string(step))},
          {"L_adv", adv},
          {"L_rec", rec},
          {"L_cls", cls ? nlohmann::json(*cls) : nlohmann::json(nullptr)},
          {"L_D", d},
          {"L_G", g}};
}

nlohmann::json EpochSnapshot::to_json() const {
  nlohmann::json j = {{"type", "epoch"},
                      {"epoch", epoch},
                      {"step", std::string(to_string(step))},
                      {"mean_L_adv", mean_adv},
                      {"mean_L_rec", mean_rec},
                      {"mean_L_D", mean_d},
                      {"mean_L_G", mean_g},
                      {"checkpoint", checkpoint},
                      {"seconds", seconds}};
  if (metrics)
    j["metrics"] = {{"fid_toy", metrics->fid_toy},
                    {"tag_fidelity", metrics->tag_fidelity},
                    {"color_bleed", metrics->color_bleed},
                    {"d_cvt_accuracy", metrics->d_cvt_accuracy}};
  return j;
}

void RunLog::validate() const {
  for (std::size_t i = 1; i < iterations.size(); ++i)
    if (iterations[i].iter <= iterations[i - 1].iter)
      throw std::logic_error("RunLog: iterations not strictly increasing");
  for (const auto& c : checkpoints)
    if (!std::filesystem::exists(c))
      throw std::logic_error("RunLog: missing checkpoint " + c);
}

const EpochSnapshot* RunLog::best_fid_epoch() const {
  const EpochSnapshot* best = nullptr;
  for (const auto& e : epochs)
    if (e.metrics && (!best || e.metrics->fid_toy < best->metrics->fid_toy)) best = &e;
  return best;
}

int CitFeatureExtractor::input_size() const {
  return static_cast<int>(cit_->config.image_size);
}

std::size_t CitFeatureExtractor::dim() const {
  return static_cast<std::size_t>(cit_->config.cit_channels);
}

std::vector<std::vector<double>> CitFeatureExtractor::extract(const std::vector<Image>& images) {
  torch::NoGradGuard ng;
  std::vector<std::vector<double>> out;
  constexpr std::size_t kChunk = 64;
  for (std::size_t b = 0; b < images.size(); b += kChunk) {
    std::vector<const Image*> ptrs;
    for (std::size_t i = b; i < std::min(images.size(), b + kChunk); ++i)
      ptrs.push_back(&images[i]);
    const auto f = cit_->pooled(images_to_batch(ptrs)).to(torch::kFloat64).contiguous();
    for (std::int64_t i = 0; i < f.size(0); ++i) {
      const double* p = f[i].data_ptr<double>();
      out.emplace_back(p, p + f.size(1));
    }
  }
  return out;
}

GeneratorOutput colorize(Generator& generator, const Image& line_art, const TagVector& cvt) {
  const auto s = generator->config.image_size;
  if (line_art.channels != 1 || line_art.width != s || line_art.height != s)
    throw std::invalid_argument("colorize: line art must be 1-channel " + std::to_string(s) +
                                "x" + std::to_string(s));
  if (cvt.kind != TagKind::cvt ||
      static_cast<std::int64_t>(cvt.values.size()) != generator->config.cvt_count)
    throw std::invalid_argument("colorize: CVT vector length mismatch");
  torch::NoGradGuard ng;
  return generator->forward(image_to_tensor(line_art).unsqueeze(0),
                            tags_to_tensor(cvt).unsqueeze(0));
}

EpochMetrics evaluate_model(ModelBundle& model, const Dataset& dataset, std::int64_t limit) {
  torch::NoGradGuard ng;
  const auto idx = limited_test_indices(dataset, limit);
  std::vector<Image> generated, reals;
  std::vector<SpriteSpec> specs;
  std::vector<LabelMap> masks;
  double correct = 0.0;
  double total = 0.0;
  constexpr std::size_t kChunk = 32;
  for (std::size_t b = 0; b < idx.size(); b += kChunk) {
    const auto e = std::min(idx.size(), b + kChunk);
    const auto batch = make_batch(dataset, idx, b, e, nullptr, nullptr, 1.0);
    const auto out = model.generator->forward(batch.line_art, batch.cvt);
    for (std::int64_t i = 0; i < out.full.size(0); ++i)
      generated.push_back(tensor_to_image(out.full[i]));
    const auto d = model.discriminator->forward(batch.color);
    correct += ((d.cvt_probs > 0.5).to(torch::kFloat32) == batch.cvt)
                   .to(torch::kFloat64)
                   .sum()
                   .item<double>();
    total += static_cast<double>(batch.cvt.numel());
    for (std::size_t k = b; k < e; ++k) {
      const auto& rec = dataset.records[idx[k]];
      reals.push_back(rec.color_image);
      specs.push_back(rec.spec);
      masks.push_back(rec.masks);
    }
  }
  EpochMetrics m;
  m.tag_fidelity = tag_fidelity(generated, specs, masks, dataset.vocab);
  m.color_bleed = color_bleed(generated, masks, dataset.vocab, specs);
  CitFeatureExtractor fx(model.generator->cit);
  m.fid_toy = fid_toy(generated, reals, fx);
  m.d_cvt_accuracy = total > 0 ? correct / total : 0.0;
  return m;
}

TrainResult train(const Dataset& dataset, const NetworkConfig& config,
                  const TrainSchedule& schedule, CitExtractor cit,
                  const TrainOptions& options) {
  schedule.validate();
  config.validate();
  if (dataset.image_size() != config.image_size)
    throw std::invalid_argument("train: dataset image size " +
                                std::to_string(dataset.image_size()) +
                                " does not match network size " +
                                std::to_string(config.image_size));
  if (static_cast<std::int64_t>(dataset.vocab.cvt_count()) != config.cvt_count ||
      static_cast<std::int64_t>(dataset.vocab.cit_count()) != config.cit_count)
    throw std::invalid_argument("train: dataset vocabulary does not match network config");
  if (dataset.manifest.vocab_hash != dataset.vocab.hash())
    throw std::invalid_argument("train: dataset/vocabulary hash mismatch");
  const auto train_idx = dataset.indices(false);
  if (train_idx.empty()) throw std::invalid_argument("train: empty training split");
  auto say = [&](const std::string& m) {
    if (options.log) options.log(m);
  };
  if (!cit->pretrained) say("warning: CIT extractor is not pretrained");

  const auto started = Clock::now();
  torch::manual_seed(schedule.seed);
  std::mt19937_64 rng(schedule.seed);
  TrainResult result{{}, ModelBundle::create(config, dataset.vocab, cit), {}};
  auto& model = result.model;
  auto& G = model.generator;
  auto& D = model.discriminator;
  const auto adam = torch::optim::AdamOptions(schedule.lr)
                        .betas({schedule.beta1, schedule.beta2});
  torch::optim::Adam opt_g(G->trainable_parameters(), adam);
  torch::optim::Adam opt_d(D->parameters(), adam);

  const bool persist = !options.run_dir.empty();
  std::filesystem::path ckpt_dir;
  if (persist) {
    ckpt_dir = options.run_dir / "ckpt";
    std::filesystem::create_directories(ckpt_dir);
    std::ofstream(options.run_dir / "config.json")
        << nlohmann::json{{"network", config.to_json()},
                          {"vocab_hash", dataset.vocab.hash()},
                          {"dataset", {{"n", dataset.manifest.n},
                                       {"size", dataset.manifest.size},
                                       {"seed", dataset.manifest.seed}}}}
               .dump(2)
        << "\n";
    std::ofstream(options.run_dir / "schedule.toml") << schedule.to_toml();
  }
  JsonlWriter jsonl(persist ? options.run_dir / "log.jsonl" : std::filesystem::path{});

  std::string last_good;
  auto checkpoint = [&](std::int64_t epoch, TrainingStep step) -> std::string {
    if (!persist) return {};
    const auto path = ckpt_dir / ("epoch_" + std::to_string(epoch) + ".ckpt");
    model.state = {{"epoch", epoch},
                   {"step", std::string(to_string(step))},
                   {"schedule", schedule.to_json()},
                   {"schedule_hash", schedule.hash()}};
    save_bundle(path, model);
    result.log.checkpoints.push_back(path.string());
    last_good = path.string();
    return last_good;
  };
  checkpoint(0, TrainingStep::segmentation);

  const auto base = sprite_default_xdog(static_cast<int>(config.image_size));
  std::uniform_real_distribution<double> brightness(schedule.brightness_min,
                                                    schedule.brightness_max);
  const auto& w = schedule.weights;
  std::int64_t iter = 0;
  auto order = train_idx;
  const auto bs = static_cast<std::size_t>(schedule.batch_size);

  for (std::int64_t epoch = 1; epoch <= schedule.total_epochs(); ++epoch) {
    const auto epoch_started = Clock::now();
    const auto step = schedule.step_for_epoch(epoch);
    const bool classify = step != TrainingStep::segmentation;
    std::shuffle(order.begin(), order.end(), rng);
    EpochSnapshot snap;
    snap.epoch = epoch;
    snap.step = step;
    std::size_t batches = 0;

    for (std::size_t b = 0; b < order.size(); b += bs) {
      const auto e = std::min(order.size(), b + bs);
      const double f =
          step == TrainingStep::brightness_finetune ? brightness(rng) : 1.0;
      const auto batch = make_batch(dataset, order, b, e,
                                    schedule.jitter_line_art ? &base : nullptr, &rng, f);
      ++iter;

      const auto out = G->forward(batch.line_art, batch.cvt);
      const auto fake = out.full.detach();
      const auto d_real = D->forward(batch.color);
      const auto d_fake = D->forward(fake);
      const auto adv = adv_loss(d_real.adv, d_fake.adv);
      const auto rec = rec_loss(batch.color, out.full, out.guide, w.beta);
      torch::Tensor cls_d;
      if (classify)
        cls_d = cls_loss(d_real.cvt_probs, d_real.cit_probs, batch.cvt, batch.cit) +
                cls_loss(d_fake.cvt_probs, d_fake.cit_probs, batch.cvt, batch.cit);
      const auto loss_d = compose_losses(step, {adv, rec.detach(), cls_d, {}}, w).d;
      const double ld = loss_d.item<double>();

      auto abort = [&](double value, const char* which) {
        const std::string msg = std::string("non-finite ") + which + " (" + fmt(value) +
                                ") at iteration " + std::to_string(iter);
        jsonl.write({{"type", "abort"}, {"iter", iter}, {"reason", msg},
                     {"last_good_checkpoint", last_good}});
        say("abort: " + msg);
        throw TrainingAborted(msg, last_good);
      };
      if (!std::isfinite(ld)) abort(ld, "L_D");
      opt_d.zero_grad();
      loss_d.backward();
      opt_d.step();

      const auto d_fake_g = D->forward(out.full);
      const auto g_adv =
          generator_adv_loss(d_real.adv.detach(), d_fake_g.adv, schedule.non_saturating);
      torch::Tensor cls_g;
      if (classify)
        cls_g = cls_loss(d_real.cvt_probs.detach(), d_real.cit_probs.detach(), batch.cvt,
                         batch.cit) +
                cls_loss(d_fake_g.cvt_probs, d_fake_g.cit_probs, batch.cvt, batch.cit);
      auto loss_g = compose_losses(step, {adv.detach(), rec, cls_g, g_adv}, w).g;
      if (options.inject_nan_at && *options.inject_nan_at == iter)
        loss_g = loss_g * std::numeric_limits<double>::quiet_NaN();
      const double lg = loss_g.item<double>();
      if (!std::isfinite(lg)) abort(lg, "L_G");
      opt_g.zero_grad();
      loss_g.backward();
      opt_g.step();

      LossRecord r;
      r.iter = iter;
      r.epoch = epoch;
      r.step = step;
      r.adv = adv.item<double>();
      r.rec = rec.item<double>();
      if (classify) r.cls = cls_d.item<double>();
      r.d = ld;
      r.g = lg;
      jsonl.write(r.to_json());
      snap.mean_adv += r.adv;
      snap.mean_rec += r.rec;
      snap.mean_d += r.d;
      snap.mean_g += r.g;
      ++batches;
      result.log.iterations.push_back(std::move(r));
    }
    const auto nb = static_cast<double>(batches);
    snap.mean_adv /= nb;
    snap.mean_rec /= nb;
    snap.mean_d /= nb;
    snap.mean_g /= nb;
    if (options.evaluate) snap.metrics = evaluate_model(model, dataset, schedule.eval_limit);
    snap.checkpoint = checkpoint(epoch, step);
    snap.seconds = seconds_since(epoch_started);
    jsonl.write(snap.to_json());
    std::ostringstream msg;
    msg << "epoch " << epoch << " [" << to_string(step) << "] L_rec " << std::setprecision(4)
        << snap.mean_rec << " L_D " << snap.mean_d << " L_G " << snap.mean_g;
    if (snap.metrics)
      msg << " fid_toy " << snap.metrics->fid_toy << " fidelity "
          << snap.metrics->tag_fidelity << " bleed " << snap.metrics->color_bleed
          << " d_cvt_acc " << snap.metrics->d_cvt_accuracy;
    msg << " (" << std::fixed << std::setprecision(1) << snap.seconds << "s)";
    say(msg.str());
    result.log.epochs.push_back(std::move(snap));
  }
  result.final_checkpoint = last_good;
  result.log.wall_seconds = seconds_since(started);
  return result;
}

EvalReport ablate(const Dataset& dataset, const NetworkConfig& base,
                  const std::vector<BlockKind>& kinds, const TrainSchedule& schedule,
                  CitExtractor cit, const TrainOptions& options) {
  if (kinds.empty()) throw std::invalid_argument("ablate: no block kinds given");
  EvalReport report;
  for (auto kind : kinds) {
    EvalRow row;
    row.kind = std::string(to_string(kind));
    row.seed = schedule.seed;
    row.schedule_hash = schedule.hash();
    try {
      auto cfg = base;
      cfg.block_kind = kind;
      auto opts = options;
      opts.evaluate = true;
      if (!options.run_dir.empty()) opts.run_dir = options.run_dir / row.kind;
      if (options.log) opts.log = [&](const std::string& m) { options.log(row.kind + ": " + m); };
      auto run = train(dataset, cfg, schedule, cit, opts);
      const auto* best = run.log.best_fid_epoch();
      row.params = count_params(*run.model.generator);
      row.fid_toy = best->metrics->fid_toy;
      row.tag_fidelity = best->metrics->tag_fidelity;
      row.color_bleed = best->metrics->color_bleed;
      row.best_epoch = static_cast<int>(best->epoch);
      row.checkpoint = best->checkpoint;
    } catch (const std::exception& e) {
      row.error = e.what();
      if (options.log) options.log(row.kind + ": failed: " + row.error);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string CurriculumReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"arm", r.arm},
                         {"seed", r.seed},
                         {"color_bleed", r.color_bleed},
                         {"tag_fidelity", r.tag_fidelity},
                         {"fid_toy", r.fid_toy}});
  return nlohmann::json{{"rows", rows_json},
                        {"schedule_hash", schedule_hash},
                        {"seeds_two_step_bleeds_less", seeds_two_step_bleeds_less},
                        {"seed_count", seed_count},
                        {"direction", direction_observed ? "observed" : "not-observed"}}
      .dump(2);
}

std::string CurriculumReport::to_table() const {
  std::ostringstream o;
  o << std::left << std::setw(13) << "arm" << std::right << std::setw(8) << "seed"
    << std::setw(13) << "color_bleed" << std::setw(14) << "tag_fidelity" << std::setw(12)
    << "fid_toy" << "\n"
    << std::fixed << std::setprecision(4);
  for (const auto& r : rows)
    o << std::left << std::setw(13) << r.arm << std::right << std::setw(8) << r.seed
      << std::setw(13) << r.color_bleed << std::setw(14) << r.tag_fidelity << std::setw(12)
      << r.fid_toy << "\n";
  o << "two-step bleeds less in " << seeds_two_step_bleeds_less << "/" << seed_count
    << " seeds: direction " << (direction_observed ? "observed" : "not-observed") << "\n";
  return o.str();
}

CurriculumReport compare_curricula(const Dataset& dataset, const NetworkConfig& config,
                                   const TrainSchedule& schedule, CitExtractor cit,
                                   const std::vector<std::uint64_t>& seeds,
                                   const TrainOptions& options) {
  if (seeds.empty()) throw std::invalid_argument("compare_curricula: no seeds");
  const auto epochs = schedule.step1_epochs + schedule.step2_epochs;
  if (epochs < 1) throw std::invalid_argument("compare_curricula: step1 + step2 must be >= 1");
  CurriculumReport report;
  report.schedule_hash = schedule.hash();
  report.seed_count = static_cast<int>(seeds.size());
  for (auto seed : seeds) {
    double bleed[2] = {0.0, 0.0};
    for (int arm = 0; arm < 2; ++arm) {
      auto s = schedule;
      s.seed = seed;
      s.finetune_epochs = 0;
      s.step1_epochs = arm == 0 ? schedule.step1_epochs : 0;
      s.step2_epochs = arm == 0 ? schedule.step2_epochs : epochs;
      const std::string name = arm == 0 ? "two_step" : "single_step";
      auto opts = options;
      opts.evaluate = false;
      if (!options.run_dir.empty())
        opts.run_dir = options.run_dir / (name + "_seed" + std::to_string(seed));
      if (options.log)
        opts.log = [&](const std::string& m) {
          options.log(name + " seed " + std::to_string(seed) + ": " + m);
        };
      auto run = train(dataset, config, s, cit, opts);
      const auto m = evaluate_model(run.model, dataset, s.eval_limit);
      bleed[arm] = m.color_bleed;
      report.rows.push_back({name, seed, m.color_bleed, m.tag_fidelity, m.fid_toy});
    }
    report.seeds_two_step_bleeds_less += bleed[0] <= bleed[1];
  }
  report.direction_observed = 2 * report.seeds_two_step_bleeds_less > report.seed_count;
  return report;
}

}  // namespace tag2pix
