#include "tag2pix/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tag2pix/digest.hpp"

namespace tag2pix {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'T', '2', 'P', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

void collect_tensors(torch::nn::Module& module, const std::string& prefix,
                     std::map<std::string, torch::Tensor>& out) {
  for (const auto& p : module.named_parameters(true)) out[prefix + p.key()] = p.value();
  for (const auto& b : module.named_buffers(true)) out[prefix + b.key()] = b.value();
}

void assign_tensors(torch::nn::Module& module, const std::string& prefix,
                    const std::map<std::string, torch::Tensor>& in) {
  torch::NoGradGuard ng;
  auto copy_into = [&](const std::string& name, torch::Tensor& dst) {
    const auto it = in.find(prefix + name);
    if (it == in.end()) throw CheckpointError("checkpoint lacks tensor " + prefix + name);
    if (it->second.sizes() != dst.sizes())
      throw CheckpointError("shape mismatch for tensor " + prefix + name);
    dst.copy_(it->second);
  };
  for (auto& p : module.named_parameters(true)) copy_into(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) copy_into(b.key(), b.value());
}

std::string tensor_digest(const std::vector<std::pair<std::string, torch::Tensor>>& named) {
  std::string buf;
  for (const auto& [name, t] : named) {
    buf += name;
    buf.push_back('\0');
    for (auto s : t.sizes()) put<std::int64_t>(buf, s);
    const auto c = t.detach().to(torch::kFloat32).contiguous();
    buf.append(reinterpret_cast<const char*>(c.data_ptr<float>()),
               static_cast<std::size_t>(c.numel()) * sizeof(float));
  }
  return sha256_hex(buf);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json table = nlohmann::json::array();
  std::string data;
  for (const auto& [name, tensor] : ckpt.tensors) {
    const auto t = tensor.detach().to(torch::kFloat32).contiguous();
    table.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"offset", data.size()}});
    data.append(reinterpret_cast<const char*>(t.data_ptr<float>()),
                static_cast<std::size_t>(t.numel()) * sizeof(float));
  }
  const nlohmann::json header = {
      {"meta",
       {{"config", ckpt.meta.config.to_json()},
        {"vocab_hash", ckpt.meta.vocab_hash},
        {"vocab", ckpt.meta.vocab_text},
        {"state", ckpt.meta.state}}},
      {"tensors", table}};
  const auto header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  out += data;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const TagVocabulary* expected) {
  const auto raw = read_all(path);
  if (raw.size() < sizeof(kMagic) || std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(path.string() + " is not a tag2pix checkpoint");
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(raw, pos);
  if (version != Checkpoint::kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = take<std::uint64_t>(raw, pos);
  if (pos + header_len > raw.size()) throw CheckpointError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(raw.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  pos += header_len;

  Checkpoint ckpt;
  try {
    const auto& meta = header.at("meta");
    ckpt.meta.config = NetworkConfig::from_json(meta.at("config"));
    ckpt.meta.vocab_hash = meta.at("vocab_hash").get<std::string>();
    ckpt.meta.vocab_text = meta.at("vocab").get<std::string>();
    ckpt.meta.state = meta.value("state", nlohmann::json::object());
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  if (expected && expected->hash() != ckpt.meta.vocab_hash)
    throw CheckpointError("checkpoint vocabulary hash " + ckpt.meta.vocab_hash +
                          " does not match " + expected->hash());

  const std::size_t data_begin = pos;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    std::int64_t numel = 1;
    for (auto s : shape) numel *= s;
    const auto bytes = static_cast<std::size_t>(numel) * sizeof(float);
    if (data_begin + offset + bytes > raw.size())
      throw CheckpointError("checkpoint truncated in tensor " + name);
    auto t = torch::empty(shape, torch::kFloat32);
    std::memcpy(t.data_ptr<float>(), raw.data() + data_begin + offset, bytes);
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

ModelBundle ModelBundle::create(const NetworkConfig& config, const TagVocabulary& vocab,
                                CitExtractor cit) {
  return ModelBundle{config, vocab, Generator(config, std::move(cit)), Discriminator(config),
                     nlohmann::json::object()};
}

void save_bundle(const std::filesystem::path& path, ModelBundle& bundle) {
  Checkpoint ckpt;
  ckpt.meta.config = bundle.config;
  ckpt.meta.vocab_hash = bundle.vocab.hash();
  ckpt.meta.vocab_text = bundle.vocab.serialize();
  ckpt.meta.state = bundle.state;
  ckpt.meta.state["cit_pretrained"] = bundle.generator->cit->pretrained;
  collect_tensors(*bundle.generator, "G.", ckpt.tensors);
  collect_tensors(*bundle.discriminator, "D.", ckpt.tensors);
  save_checkpoint(path, ckpt);
}

ModelBundle load_bundle(const std::filesystem::path& path, const TagVocabulary* expected) {
  auto ckpt = load_checkpoint(path, expected);
  auto vocab = TagVocabulary::parse(ckpt.meta.vocab_text);
  if (vocab.hash() != ckpt.meta.vocab_hash)
    throw CheckpointError("embedded vocabulary does not match its recorded hash");
  CitExtractor cit(ckpt.meta.config);
  auto b = ModelBundle::create(ckpt.meta.config, vocab, cit);
  assign_tensors(*b.generator, "G.", ckpt.tensors);
  assign_tensors(*b.discriminator, "D.", ckpt.tensors);
  b.generator->cit->pretrained = ckpt.meta.state.value("cit_pretrained", false);
  b.generator->cit->set_frozen(true);
  b.state = ckpt.meta.state;
  return b;
}

void save_cit_extractor(const std::filesystem::path& path, CitExtractor& cit,
                        const TagVocabulary& vocab, const nlohmann::json& state) {
  Checkpoint ckpt;
  ckpt.meta.config = cit->config;
  ckpt.meta.vocab_hash = vocab.hash();
  ckpt.meta.vocab_text = vocab.serialize();
  ckpt.meta.state = state.is_object() ? state : nlohmann::json::object();
  ckpt.meta.state["cit_pretrained"] = cit->pretrained;
  collect_tensors(*cit, "cit.", ckpt.tensors);
  save_checkpoint(path, ckpt);
}

CitExtractor load_cit_extractor(const std::filesystem::path& path,
                                const TagVocabulary* expected, NetworkConfig* config_out) {
  auto ckpt = load_checkpoint(path, expected);
  CitExtractor cit(ckpt.meta.config);
  assign_tensors(*cit, "cit.", ckpt.tensors);
  cit->pretrained = ckpt.meta.state.value("cit_pretrained", false);
  cit->set_frozen(true);
  if (config_out) *config_out = ckpt.meta.config;
  return cit;
}

}  // namespace tag2pix
