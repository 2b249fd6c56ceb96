#include "tag2pix/service.hpp"


#include <set>
#include <stdexcept>

#include "tag2pix/digest.hpp"
#include "tag2pix/image.hpp"
#include "tag2pix/lineart.hpp"
#include "tag2pix/training.hpp"

// After the Eigen users: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace tag2pix {
namespace {

ServiceReply error(int status, const std::string& code, const std::string& message) {
  return {status, {{"code", code}, {"message", message}}};
}

std::string default_code(int status) {
  switch (status) {
    case 404: return "not_found";
    case 405: return "method_not_allowed";
    case 413: return "payload_too_large";
    case 503: return "loading";
    default: return status >= 500 ? "internal" : "bad_request";
  }
}

std::string encode_image(const Image& image) {
  const auto png = encode_png(image);
  return base64_encode(png);
}

}  // namespace

std::string checkpoint_id(ModelBundle& model) {
  std::vector<std::pair<std::string, torch::Tensor>> named;
  for (const auto& p : model.generator->named_parameters(true))
    named.emplace_back(p.key(), p.value());
  return tensor_digest(named).substr(0, 16);
}

ColorizeService::ColorizeService(ServiceOptions options)
    : options_(std::move(options)), started_(std::chrono::steady_clock::now()) {}

void ColorizeService::add_variant(const std::string& name, ModelBundle model,
                                  std::string id) {
  if (ready_) throw std::logic_error("service: variants must be added before mark_ready");
  if (variants_.contains(name))
    throw std::invalid_argument("service: duplicate variant '" + name + "'");
  if (vocab_ && vocab_->hash() != model.vocab.hash())
    throw std::invalid_argument("service: variant '" + name +
                                "' uses a different tag vocabulary");
  if (!vocab_) vocab_ = model.vocab;
  model.generator->eval();
  model.discriminator->eval();
  variants_.emplace(name, Variant{std::move(model), std::move(id)});
}

void ColorizeService::mark_ready() {
  if (variants_.empty()) throw std::logic_error("service: no model loaded");
  if (!variants_.contains(options_.default_variant))
    options_.default_variant = variants_.begin()->first;
  ready_ = true;
}

ServiceReply ColorizeService::tags() const {
  if (!ready_) return error(503, "loading", "model is still loading");
  nlohmann::json cvt = nlohmann::json::object();
  for (auto cat : kColorCategories) {
    nlohmann::json names = nlohmann::json::array();
    for (auto i : vocab_->category_members(cat)) names.push_back(vocab_->cvt(i).name);
    cvt[std::string(to_string(cat))] = names;
  }
  nlohmann::json variants = nlohmann::json::array();
  for (const auto& [name, v] : variants_) variants.push_back(name);
  return {200,
          {{"vocab_hash", vocab_->hash()},
           {"cvt", cvt},
           {"cit", vocab_->cit_names()},
           {"variants", variants},
           {"default_variant", options_.default_variant}}};
}

ServiceReply ColorizeService::health() const {
  if (!ready_) return error(503, "loading", "model is still loading");
  const double uptime =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  const auto& def = variants_.at(options_.default_variant);
  return {200,
          {{"status", "ok"},
           {"checkpoint_id", def.checkpoint_id},
           {"uptime_s", uptime},
           {"vocab_hash", vocab_->hash()}}};
}

ServiceReply ColorizeService::colorize(const ColorizeRequest& request) {
  if (!ready_) return error(503, "loading", "model is still loading");
  const auto name = request.variant.empty() ? options_.default_variant : request.variant;
  const auto it = variants_.find(name);
  if (it == variants_.end()) return error(404, "unknown_variant", "unknown variant '" + name + "'");
  auto& variant = it->second;

  std::set<std::string> tags;
  for (const auto& t : request.tags) {
    if (t.empty()) continue;
    if (vocab_->index_of(TagKind::cvt, t)) {
      tags.insert(t);
      continue;
    }
    auto r = vocab_->index_of(TagKind::cit, t)
                 ? error(422, "not_color_tag",
                         "'" + t + "' is a color-invariant tag; only color tags are accepted")
                 : error(422, "unknown_tag", "unknown tag '" + t + "'");
    r.body["tag"] = t;
    return r;
  }

  if (request.image.empty()) return error(400, "bad_request", "missing image");
  Image sketch;
  try {
    sketch = decode_png(request.image, 1);
  } catch (const std::exception& e) {
    return error(400, "invalid_image", std::string("image is not a decodable PNG: ") + e.what());
  }
  if (sketch.width > options_.max_image_dim || sketch.height > options_.max_image_dim)
    return error(413, "image_too_large",
                 "image " + std::to_string(sketch.width) + "x" + std::to_string(sketch.height) +
                     " exceeds the " + std::to_string(options_.max_image_dim) + " px limit");

  const auto size = static_cast<int>(variant.model.config.image_size);
  auto art = resize_bilinear(letterbox_square(sketch, 1.0f), size, size);
  if (request.real_sketch) art = brightness_scale(art, kRealSketchBrightness);
  const auto cvt = encode_tags(tags, *vocab_, TagKind::cvt);

  GeneratorOutput out;
  double ms = 0.0;
  {
    std::lock_guard lock(inference_mutex_);
    const auto t0 = std::chrono::steady_clock::now();
    out = tag2pix::colorize(variant.model.generator, art, cvt);
    ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
             .count();
  }
  return {200,
          {{"image", encode_image(tensor_to_image(out.full[0]))},
           {"guide_image", encode_image(tensor_to_image(out.guide[0]))},
           {"width", size},
           {"height", size},
           {"tags", tags},
           {"model_info",
            {{"checkpoint_id", variant.checkpoint_id},
             {"variant", name},
             {"block_kind", std::string(to_string(variant.model.config.block_kind))},
             {"inference_ms", ms}}}}};
}

ServiceReply ColorizeService::colorize_json(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error(400, "bad_request", "body is not valid JSON");
  }
  if (!j.is_object()) return error(400, "bad_request", "body must be a JSON object");
  ColorizeRequest req;
  try {
    if (!j.contains("image") || !j["image"].is_string())
      return error(400, "bad_request", "field 'image' (base64 PNG) is required");
    auto bytes = base64_decode(j["image"].get<std::string>());
    if (!bytes) return error(400, "invalid_image", "field 'image' is not valid base64");
    req.image = std::move(*bytes);
    if (j.contains("tags")) {
      const auto& t = j["tags"];
      if (t.is_string()) {
        const auto s = split_tag_list(t.get<std::string>());
        req.tags.assign(s.begin(), s.end());
      } else {
        req.tags = t.get<std::vector<std::string>>();
      }
    }
    req.variant = j.value("variant", std::string());
    req.real_sketch = j.value("real_sketch", false);
  } catch (const nlohmann::json::exception& e) {
    return error(400, "bad_request", std::string("malformed field: ") + e.what());
  }
  return colorize(req);
}

void ColorizeService::install(httplib::Server& server) {
  auto send = [](httplib::Response& res, const ServiceReply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.set_payload_max_length(options_.max_body_bytes);
  server.Get("/tags", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, tags());
  });
  server.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, health());
  });
  server.Post("/colorize", [this, send](const httplib::Request& req, httplib::Response& res) {
    try {
      if (req.is_multipart_form_data()) {
        ColorizeRequest cr;
        if (!req.has_file("image")) {
          send(res, error(400, "bad_request", "multipart field 'image' is required"));
          return;
        }
        const auto& img = req.get_file_value("image").content;
        cr.image.assign(img.begin(), img.end());
        if (req.has_file("tags")) {
          const auto s = split_tag_list(req.get_file_value("tags").content);
          cr.tags.assign(s.begin(), s.end());
        }
        if (req.has_file("variant")) cr.variant = req.get_file_value("variant").content;
        if (req.has_file("real_sketch"))
          cr.real_sketch = req.get_file_value("real_sketch").content == "true";
        send(res, colorize(cr));
      } else {
        send(res, colorize_json(req.body));
      }
    } catch (const std::exception& e) {
      send(res, error(500, "internal", e.what()));
    }
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    res.set_content(nlohmann::json{{"code", default_code(res.status)},
                                   {"message", httplib::status_message(res.status)}}
                        .dump(),
                    "application/json");
    return httplib::Server::HandlerResponse::Handled;
  });
  if (options_.access_log) {
    server.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
      options_.access_log(nlohmann::json{{"method", req.method},
                                         {"path", req.path},
                                         {"status", res.status},
                                         {"remote", req.remote_addr},
                                         {"bytes_in", req.body.size()},
                                         {"bytes_out", res.body.size()}}
                              .dump());
    });
  }
}

}  // namespace tag2pix
