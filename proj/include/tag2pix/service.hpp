#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tag2pix/checkpoint.hpp"
#include "tag2pix/tagspace.hpp"

namespace httplib {
class Server;
}

namespace tag2pix {

struct ServiceOptions {
  int max_image_dim = 2048;                    ///< pixels, either side
  std::size_t max_body_bytes = 16u << 20;      ///< request body limit
  std::string default_variant = "secat";
  /// One JSON line per request. Unset means no access log.
  std::function<void(const std::string&)> access_log;
};

struct ServiceReply {
  int status = 200;
  nlohmann::json body;
};

struct ColorizeRequest {
  std::vector<std::uint8_t> image;  ///< PNG bytes
  std::vector<std::string> tags;
  std::string variant;  ///< empty selects the default
  bool real_sketch = false;
};

/// Inference backend for the studio. Starts in the loading state (503 on
/// /tags and /health); variants are added and then `mark_ready` opens it.
/// Loaded weights are never modified; inference is serialized by a mutex,
/// so concurrent requests queue.
///
/// Error bodies are {"code": ..., "message": ...}. Codes: bad_request,
/// invalid_image, unknown_tag (422, with "tag"), not_color_tag (422),
/// image_too_large (413), payload_too_large (413), unknown_variant (404),
/// loading (503), internal (500).
class ColorizeService {
 public:
  explicit ColorizeService(ServiceOptions options = {});

  /// All variants must share one vocabulary. Throws std::invalid_argument on
  /// a vocabulary mismatch or a duplicate name.
  void add_variant(const std::string& name, ModelBundle model, std::string checkpoint_id);
  void mark_ready();
  bool ready() const { return ready_.load(); }

  ServiceReply tags() const;
  ServiceReply health() const;
  ServiceReply colorize(const ColorizeRequest& request);
  /// Parses a JSON body ({"image": base64, "tags": [...] | "a,b", "variant",
  /// "real_sketch"}) and runs colorize.
  ServiceReply colorize_json(const std::string& body);

  /// Routes GET /tags, GET /health, POST /colorize (JSON or multipart) and
  /// the access log onto `server`.
  void install(httplib::Server& server);

 private:
  struct Variant {
    ModelBundle model;
    std::string checkpoint_id;
  };

  ServiceOptions options_;
  std::map<std::string, Variant> variants_;
  std::optional<TagVocabulary> vocab_;
  std::atomic<bool> ready_{false};
  std::mutex inference_mutex_;
  std::chrono::steady_clock::time_point started_;
};

/// Stable identifier for a checkpoint's generator weights.
std::string checkpoint_id(ModelBundle& model);

}  // namespace tag2pix
