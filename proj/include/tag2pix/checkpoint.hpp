#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "tag2pix/nets.hpp"
#include "tag2pix/tagspace.hpp"

namespace tag2pix {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint container, version 1:
///
///   bytes 0..7    magic "T2PCKPT\0"
///   uint32 LE     format version
///   uint64 LE     header length L
///   L bytes       JSON header {meta, tensors: [{name, shape, offset}]}
///   rest          float32 LE tensor data, offsets relative to this point
///
/// `meta` holds the NetworkConfig, the vocabulary manifest text and its hash,
/// and free-form schedule state.
struct CheckpointMeta {
  NetworkConfig config;
  std::string vocab_hash;
  std::string vocab_text;
  nlohmann::json state = nlohmann::json::object();
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  CheckpointMeta meta;
  std::map<std::string, torch::Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws CheckpointError on a bad magic, unknown version, truncated data,
/// or (when `expected` is given) a vocabulary hash mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const TagVocabulary* expected = nullptr);

/// Generator (including its CIT extractor) plus discriminator.
struct ModelBundle {
  NetworkConfig config;
  TagVocabulary vocab;
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  nlohmann::json state = nlohmann::json::object();

  /// Fresh, randomly initialized networks around a given CIT extractor.
  static ModelBundle create(const NetworkConfig& config, const TagVocabulary& vocab,
                            CitExtractor cit);
};

void save_bundle(const std::filesystem::path& path, ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& path,
                        const TagVocabulary* expected = nullptr);

/// Stand-alone CIT extractor checkpoint (tensors prefixed "cit.").
void save_cit_extractor(const std::filesystem::path& path, CitExtractor& cit,
                        const TagVocabulary& vocab, const nlohmann::json& state = {});
CitExtractor load_cit_extractor(const std::filesystem::path& path,
                                const TagVocabulary* expected = nullptr,
                                NetworkConfig* config_out = nullptr);

/// Copies every named parameter and buffer of `module` into `out` under
/// `prefix`, and back.
void collect_tensors(torch::nn::Module& module, const std::string& prefix,
                     std::map<std::string, torch::Tensor>& out);
void assign_tensors(torch::nn::Module& module, const std::string& prefix,
                    const std::map<std::string, torch::Tensor>& in);

/// SHA-256 over names, shapes and values; equal hashes mean bit-identical.
std::string tensor_digest(const std::vector<std::pair<std::string, torch::Tensor>>& named);

}  // namespace tag2pix
