#include "tag2pix/cli.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "tag2pix/checkpoint.hpp"
#include "tag2pix/eval.hpp"
#include "tag2pix/lineart.hpp"
#include "tag2pix/nets.hpp"
#include "tag2pix/service.hpp"
#include "tag2pix/synthdata.hpp"
#include "tag2pix/tagspace.hpp"
#include "tag2pix/training.hpp"

// After the Eigen users: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace tag2pix {
namespace {

/// Bad user input: exit 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void require_file(const std::string& flag, const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p))
    throw ValidationError(flag + ": file not found: " + p.string());
}

void require_dir(const std::string& flag, const std::filesystem::path& p) {
  if (!std::filesystem::is_directory(p))
    throw ValidationError(flag + ": directory not found: " + p.string());
}

BlockKind block_kind_flag(const std::string& flag, const std::string& name) {
  const auto k = parse_block_kind(name);
  if (!k)
    throw ValidationError(flag + ": unknown block kind '" + name +
                          "' (expected resnext, se_resnext, concat_front, concat_all, "
                          "adain or secat)");
  return *k;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

struct ScheduleFlags {
  std::string path;
  std::optional<std::int64_t> step1, step2, finetune, batch_size, eval_limit;
  std::optional<double> lambda_rec, lambda_cls, beta, lr;
  std::optional<std::uint64_t> seed;
  bool non_saturating = false;

  void add(CLI::App* app) {
    app->add_option("--schedule", path, "schedule file (TOML key = value); defaults apply if omitted");
    app->add_option("--step1-epochs", step1, "override: segmentation epochs");
    app->add_option("--step2-epochs", step2, "override: colorization epochs");
    app->add_option("--finetune-epochs", finetune, "override: brightness fine-tune epochs");
    app->add_option("--batch-size", batch_size, "override: samples per batch");
    app->add_option("--eval-limit", eval_limit, "override: test images scored per epoch (0 = all)");
    app->add_option("--lambda-rec", lambda_rec, "override: reconstruction weight");
    app->add_option("--lambda-cls", lambda_cls, "override: classification weight");
    app->add_option("--beta", beta, "override: guide-decoder L1 weight");
    app->add_option("--lr", lr, "override: Adam learning rate");
    app->add_option("--seed", seed, "override: run seed");
    app->add_flag("--non-saturating", non_saturating,
                  "generator uses -log D(G) instead of log(1 - D(G))");
  }

  TrainSchedule resolve() const {
    TrainSchedule s;
    if (!path.empty()) s = TrainSchedule::load(path);
    if (step1) s.step1_epochs = *step1;
    if (step2) s.step2_epochs = *step2;
    if (finetune) s.finetune_epochs = *finetune;
    if (batch_size) s.batch_size = *batch_size;
    if (eval_limit) s.eval_limit = *eval_limit;
    if (lambda_rec) s.weights.lambda_rec = *lambda_rec;
    if (lambda_cls) s.weights.lambda_cls = *lambda_cls;
    if (beta) s.weights.beta = *beta;
    if (lr) s.lr = *lr;
    if (seed) s.seed = *seed;
    if (non_saturating) s.non_saturating = true;
    s.validate();
    return s;
  }
};

struct Ctx {
  std::ostream& out;
  std::ostream& err;
  std::function<void(const std::string&)> log() {
    return [this](const std::string& m) { err << m << std::endl; };
  }
};

struct ModelFlags {
  std::string data;
  std::string cit;
  std::string block_kind = "secat";
  void add(CLI::App* app, bool kind = true) {
    app->add_option("--data", data, "dataset directory (from `dataset`)")->required();
    app->add_option("--cit", cit, "pretrained CIT extractor checkpoint (from `pretrain-cit`)")
        ->required();
    if (kind)
      app->add_option("--block-kind", block_kind, "decoder block kind")->capture_default_str();
  }
};

struct Loaded {
  Dataset dataset;
  CitExtractor cit;
  NetworkConfig config;
};

Loaded load_inputs(const ModelFlags& f) {
  require_dir("--data", f.data);
  require_file("--cit", f.cit);
  auto ds = Dataset::load(f.data);
  NetworkConfig cit_cfg;
  auto cit = load_cit_extractor(f.cit, &ds.vocab, &cit_cfg);
  if (cit_cfg.image_size != ds.image_size())
    throw ValidationError("--cit: extractor was trained at " +
                          std::to_string(cit_cfg.image_size) + " px but the dataset is " +
                          std::to_string(ds.image_size()) + " px");
  auto cfg = NetworkConfig::toy(cit_cfg.image_size, cit_cfg.base_channels,
                                block_kind_flag("--block-kind", f.block_kind), ds.vocab,
                                cit_cfg.style_dim);
  return {std::move(ds), std::move(cit), cfg};
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::atomic<httplib::Server*> g_server{nullptr};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Ctx ctx{out, err};
  CLI::App app{"tag2pix: tag-conditioned line-art colorization", "tag2pix"};
  app.set_config("--config", "", "TOML key = value file; explicit flags override it");
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "tensor backend threads (0 = backend default)")
      ->capture_default_str();

  // dataset
  auto* ds_cmd = app.add_subcommand("dataset", "render a synthetic sprite dataset");
  std::size_t ds_n = 1000;
  int ds_size = 64;
  std::uint64_t ds_seed = 0;
  std::string ds_out, ds_vocab;
  ds_cmd->add_option("--n", ds_n, "number of sprites")->capture_default_str()->check(CLI::PositiveNumber);
  ds_cmd->add_option("--size", ds_size, "image side in pixels (64, 128 or 256)")
      ->capture_default_str()
      ->check(CLI::IsMember({64, 128, 256}));
  ds_cmd->add_option("--seed", ds_seed, "dataset seed")->capture_default_str();
  ds_cmd->add_option("--out", ds_out, "output directory")->required();
  ds_cmd->add_option("--vocab", ds_vocab, "vocabulary manifest (default: built-in 12 CVT / 6 CIT)");

  // lineart
  auto* la_cmd = app.add_subcommand("lineart", "extract XDoG line art from a PNG");
  std::string la_in, la_out, la_preset = "sprite-default";
  std::optional<double> la_sigma, la_k, la_tau, la_eps, la_phi;
  double la_brightness = 1.0;
  la_cmd->add_option("--in", la_in, "input PNG (RGB or gray)")->required();
  la_cmd->add_option("--out", la_out, "output PNG (gray)")->required();
  la_cmd->add_option("--preset", la_preset, "XDoG preset, scaled to the image width")
      ->capture_default_str();
  la_cmd->add_option("--sigma", la_sigma, "override: inner blur sigma (pixels)");
  la_cmd->add_option("--k", la_k, "override: outer/inner blur ratio (> 1)");
  la_cmd->add_option("--tau", la_tau, "override: outer blur weight");
  la_cmd->add_option("--eps", la_eps, "override: threshold (luminance units)");
  la_cmd->add_option("--phi", la_phi, "override: soft-threshold sharpness");
  la_cmd->add_option("--brightness", la_brightness, "brightness factor >= 1 applied afterwards")
      ->capture_default_str();

  // pretrain-cit
  auto* pc_cmd = app.add_subcommand("pretrain-cit", "train the CIT feature extractor");
  std::string pc_data, pc_out;
  CitPretrainOptions pc_opts;
  std::int64_t pc_base = 16;
  pc_cmd->add_option("--data", pc_data, "dataset directory")->required();
  pc_cmd->add_option("--out", pc_out, "output checkpoint path")->required();
  pc_cmd->add_option("--epochs", pc_opts.epochs, "training epochs")->capture_default_str();
  pc_cmd->add_option("--batch-size", pc_opts.batch_size, "samples per batch")->capture_default_str();
  pc_cmd->add_option("--lr", pc_opts.lr, "Adam learning rate")->capture_default_str();
  pc_cmd->add_option("--seed", pc_opts.seed, "seed")->capture_default_str();
  pc_cmd->add_option("--base-channels", pc_base, "network base width b")->capture_default_str();

  // train
  auto* tr_cmd = app.add_subcommand("train", "two-step training with brightness fine-tune");
  ModelFlags tr_model;
  ScheduleFlags tr_sched;
  std::string tr_run;
  tr_model.add(tr_cmd);
  tr_sched.add(tr_cmd);
  tr_cmd->add_option("--run-dir", tr_run, "run directory (config, schedule, log.jsonl, ckpt/)")
      ->required();

  // ablate
  auto* ab_cmd = app.add_subcommand("ablate", "train one generator per decoder block kind");
  ModelFlags ab_model;
  ScheduleFlags ab_sched;
  std::string ab_run;
  std::vector<std::string> ab_kinds;
  ab_model.add(ab_cmd, false);
  ab_sched.add(ab_cmd);
  ab_cmd->add_option("--kinds", ab_kinds, "block kinds (default: all six)")->delimiter(',');
  ab_cmd->add_option("--run-dir", ab_run, "output directory (per-kind runs + report)")->required();

  // compare-curricula
  auto* cc_cmd = app.add_subcommand("compare-curricula", "two-step vs single-step training");
  ModelFlags cc_model;
  ScheduleFlags cc_sched;
  std::string cc_run;
  std::vector<std::uint64_t> cc_seeds{0, 1, 2};
  cc_model.add(cc_cmd);
  cc_sched.add(cc_cmd);
  cc_cmd->add_option("--seeds", cc_seeds, "seeds, one pair of runs each")
      ->delimiter(',')
      ->capture_default_str();
  cc_cmd->add_option("--run-dir", cc_run, "output directory (runs + report)")->required();

  // eval
  auto* ev_cmd = app.add_subcommand("eval", "metrics for a checkpoint or two image folders");
  std::string ev_ckpt, ev_data, ev_gen, ev_ref, ev_cit;
  std::int64_t ev_limit = 0;
  ev_cmd->add_option("--ckpt", ev_ckpt, "model checkpoint (with --data)");
  ev_cmd->add_option("--data", ev_data, "dataset directory (with --ckpt)");
  ev_cmd->add_option("--limit", ev_limit, "test images to score (0 = all)")->capture_default_str();
  ev_cmd->add_option("--generated", ev_gen, "folder of generated PNGs (with --reference)");
  ev_cmd->add_option("--reference", ev_ref, "folder of reference PNGs (with --generated)");
  ev_cmd->add_option("--cit", ev_cit, "feature extractor checkpoint for folder FID");

  // colorize
  auto* co_cmd = app.add_subcommand("colorize", "colorize one line art");
  std::string co_ckpt, co_in, co_tags, co_out, co_guide;
  bool co_real = false;
  co_cmd->add_option("--ckpt", co_ckpt, "model checkpoint")->required();
  co_cmd->add_option("--in", co_in, "line art PNG (letterboxed to white, resized to model size)")
      ->required();
  co_cmd->add_option("--tags", co_tags, "comma-separated color tags, e.g. blue_hair,red_eyes");
  co_cmd->add_option("--out", co_out, "output PNG at model size")->required();
  co_cmd->add_option("--guide-out", co_guide, "optional guide-decoder output PNG");
  co_cmd->add_flag("--real-sketch", co_real, "apply the real-sketch brightness preset first");

  // serve
  auto* sv_cmd = app.add_subcommand("serve", "HTTP inference service");
  std::vector<std::string> sv_ckpts;
  std::string sv_host = "127.0.0.1";
  int sv_port = 8080;
  ServiceOptions sv_opts;
  sv_cmd->add_option("--ckpt", sv_ckpts, "checkpoint, optionally as variant=path (repeatable)")
      ->required()
      ->envname("TAG2PIX_CKPT");
  sv_cmd->add_option("--host", sv_host, "bind address")->capture_default_str()->envname("TAG2PIX_HOST");
  sv_cmd->add_option("--port", sv_port, "TCP port")->capture_default_str()->envname("TAG2PIX_PORT");
  sv_cmd->add_option("--max-image-dim", sv_opts.max_image_dim, "largest accepted sketch side (pixels)")
      ->capture_default_str()
      ->envname("TAG2PIX_MAX_IMAGE_DIM");
  sv_cmd->add_option("--max-body-bytes", sv_opts.max_body_bytes, "largest request body (bytes)")
      ->capture_default_str();
  sv_cmd->add_option("--default-variant", sv_opts.default_variant, "variant used when unspecified")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  auto* sub = app.get_subcommands().front();
  err << "# resolved configuration\n" << app.config_to_str(true, false) << std::flush;
  if (threads > 0) torch::set_num_threads(threads);

  try {
    if (sub == ds_cmd) {
      const auto vocab =
          ds_vocab.empty() ? TagVocabulary::desk_default() : TagVocabulary::load(ds_vocab);
      const auto m = build_dataset(ds_n, ds_size, ds_seed, vocab, ds_out);
      out << nlohmann::json{{"out", ds_out},
                            {"n", m.n},
                            {"train", m.train_count()},
                            {"test", m.test_count()},
                            {"vocab_hash", m.vocab_hash}}
                 .dump()
          << "\n";
    } else if (sub == la_cmd) {
      require_file("--in", la_in);
      const auto img = read_png(la_in, 3);
      auto p = xdog_preset(la_preset, img.width);
      if (la_sigma) p.sigma = *la_sigma;
      if (la_k) p.k = *la_k;
      if (la_tau) p.tau = *la_tau;
      if (la_eps) p.eps = *la_eps;
      if (la_phi) p.phi = *la_phi;
      p.validate();
      auto art = xdog(grayscale(img), p);
      if (la_brightness != 1.0) art = brightness_scale(art, la_brightness);
      write_png(la_out, art);
      out << nlohmann::json{{"out", la_out}, {"sigma", p.sigma}, {"k", p.k}, {"tau", p.tau},
                            {"eps", p.eps}, {"phi", p.phi}}
                 .dump()
          << "\n";
    } else if (sub == pc_cmd) {
      require_dir("--data", pc_data);
      const auto ds = Dataset::load(pc_data);
      const auto cfg = NetworkConfig::toy(ds.image_size(), pc_base, BlockKind::secat, ds.vocab);
      auto r = pretrain_cit(ds, cfg, pc_opts, ctx.log());
      nlohmann::json tags = nlohmann::json::array();
      for (const auto& m : r.test_metrics)
        tags.push_back({{"tag", m.tag}, {"precision", m.precision}, {"recall", m.recall},
                        {"accuracy", m.accuracy}});
      const nlohmann::json summary = {{"initial_loss", r.initial_loss},
                                      {"epoch_losses", r.epoch_losses},
                                      {"mean_test_accuracy", r.mean_test_accuracy},
                                      {"per_tag", tags}};
      save_cit_extractor(pc_out, r.extractor, ds.vocab, {{"pretrain", summary}});
      out << summary.dump(2) << "\n";
    } else if (sub == tr_cmd) {
      const auto schedule = tr_sched.resolve();
      auto in = load_inputs(tr_model);
      err << "# schedule\n" << schedule.to_toml() << std::flush;
      TrainOptions o;
      o.run_dir = tr_run;
      o.log = ctx.log();
      auto r = train(in.dataset, in.config, schedule, in.cit, o);
      out << nlohmann::json{{"final_checkpoint", r.final_checkpoint},
                            {"epochs", r.log.epochs.size()},
                            {"iterations", r.log.iterations.size()},
                            {"wall_seconds", r.log.wall_seconds}}
                 .dump()
          << "\n";
    } else if (sub == ab_cmd) {
      const auto schedule = ab_sched.resolve();
      auto in = load_inputs(ab_model);
      std::vector<BlockKind> kinds;
      for (const auto& k : ab_kinds) kinds.push_back(block_kind_flag("--kinds", k));
      if (kinds.empty()) kinds.assign(kAllBlockKinds.begin(), kAllBlockKinds.end());
      TrainOptions o;
      o.run_dir = ab_run;
      o.log = ctx.log();
      const auto report = ablate(in.dataset, in.config, kinds, schedule, in.cit, o);
      write_text(std::filesystem::path(ab_run) / "report.json", report.to_json());
      write_text(std::filesystem::path(ab_run) / "report.txt", report.to_table());
      out << report.to_table();
      for (const auto& r : report.rows)
        if (!r.error.empty()) return kExitRuntime;
    } else if (sub == cc_cmd) {
      const auto schedule = cc_sched.resolve();
      auto in = load_inputs(cc_model);
      TrainOptions o;
      o.run_dir = cc_run;
      o.log = ctx.log();
      const auto report =
          compare_curricula(in.dataset, in.config, schedule, in.cit, cc_seeds, o);
      write_text(std::filesystem::path(cc_run) / "report.json", report.to_json());
      write_text(std::filesystem::path(cc_run) / "report.txt", report.to_table());
      out << report.to_table();
    } else if (sub == ev_cmd) {
      if (!ev_ckpt.empty()) {
        if (ev_data.empty()) throw ValidationError("--ckpt requires --data");
        require_file("--ckpt", ev_ckpt);
        require_dir("--data", ev_data);
        const auto ds = Dataset::load(ev_data);
        auto model = load_bundle(ev_ckpt, &ds.vocab);
        const auto m = evaluate_model(model, ds, ev_limit);
        for (const auto& [k, v] : std::vector<std::pair<std::string, double>>{
                 {"fid_toy", m.fid_toy},
                 {"tag_fidelity", m.tag_fidelity},
                 {"color_bleed", m.color_bleed},
                 {"d_cvt_accuracy", m.d_cvt_accuracy}})
          out << nlohmann::json{{"metric", k}, {"value", v}}.dump() << "\n";
      } else if (!ev_gen.empty() && !ev_ref.empty()) {
        if (ev_cit.empty()) throw ValidationError("--generated/--reference require --cit");
        require_dir("--generated", ev_gen);
        require_dir("--reference", ev_ref);
        require_file("--cit", ev_cit);
        CitFeatureExtractor fx(load_cit_extractor(ev_cit));
        out << nlohmann::json{{"metric", "fid_toy"}, {"value", fid_toy(ev_gen, ev_ref, fx)}}.dump()
            << "\n";
      } else {
        throw ValidationError("eval needs --ckpt with --data, or --generated with --reference");
      }
    } else if (sub == co_cmd) {
      require_file("--ckpt", co_ckpt);
      require_file("--in", co_in);
      auto model = load_bundle(co_ckpt);
      const auto tags = split_tag_list(co_tags);
      for (const auto& t : tags)
        if (!model.vocab.index_of(TagKind::cvt, t))
          throw ValidationError("--tags: unknown color tag '" + t + "'");
      const auto size = static_cast<int>(model.config.image_size);
      auto art = resize_bilinear(letterbox_square(read_png(co_in, 1), 1.0f), size, size);
      if (co_real) art = brightness_scale(art, kRealSketchBrightness);
      const auto o = colorize(model.generator, art, encode_tags(tags, model.vocab, TagKind::cvt));
      write_png(co_out, tensor_to_image(o.full[0]));
      if (!co_guide.empty()) write_png(co_guide, tensor_to_image(o.guide[0]));
      out << nlohmann::json{{"out", co_out}, {"size", size}, {"tags", tags}}.dump() << "\n";
    } else if (sub == sv_cmd) {
      if (sv_port < 0 || sv_port > 65535) throw ValidationError("--port: out of range");
      std::vector<std::pair<std::string, std::string>> specs;
      for (const auto& c : sv_ckpts) {
        const auto eq = c.find('=');
        specs.emplace_back(eq == std::string::npos ? "" : c.substr(0, eq),
                           eq == std::string::npos ? c : c.substr(eq + 1));
        require_file("--ckpt", specs.back().second);
      }
      sv_opts.access_log = [&err](const std::string& line) { err << line << std::endl; };
      ColorizeService service(sv_opts);
      httplib::Server server;
      service.install(server);
      // Load in the background so /health answers 503 until ready.
      std::thread loader([&] {
        try {
          for (const auto& [name, path] : specs) {
            auto model = load_bundle(path);
            const auto id = checkpoint_id(model);
            const auto variant =
                name.empty() ? std::string(to_string(model.config.block_kind)) : name;
            service.add_variant(variant, std::move(model), id);
            err << "loaded variant " << variant << " from " << path << std::endl;
          }
          service.mark_ready();
        } catch (const std::exception& e) {
          err << "error: model load failed: " << e.what() << std::endl;
          server.stop();
        }
      });
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (auto* s = g_server.load()) s->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (auto* s = g_server.load()) s->stop();
      });
      err << "listening on " << sv_host << ":" << sv_port << std::endl;
      const bool ok = server.listen(sv_host, sv_port);
      loader.join();
      g_server = nullptr;
      if (!ok && !service.ready()) return kExitRuntime;
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << std::endl;
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace tag2pix
