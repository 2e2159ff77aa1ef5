#include "capfuse/checkpoint.hpp"

#include <cstring>

#include "capfuse/data.hpp"
#include "binio.hpp"

namespace capfuse {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

void write_tensor_map(binio::Writer& w, const std::map<std::string, Shape>& shapes,
                      const std::map<std::string, std::vector<float>>& values) {
  w.u32(static_cast<std::uint32_t>(values.size()));
  for (const auto& [key, data] : values) {
    w.str(key);
    const Shape& shape = shapes.at(key);
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (const int d : shape) w.u32(static_cast<std::uint32_t>(d));
    w.bytes(data.data(), data.size() * 4);
  }
}

void read_tensor_map(binio::Reader& r, std::map<std::string, Shape>& shapes,
                     std::map<std::string, std::vector<float>>& values) {
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string key = r.str("tensor key");
    const std::uint8_t ndims = r.u8(key.c_str());
    Shape shape(ndims);
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < ndims; ++d) {
      shape[d] = static_cast<int>(r.u32(key.c_str()));
      if (shape[d] <= 0) {
        throw FormatError("checkpoint: non-positive extent in tensor '" + key + "'", r.pos);
      }
      numel *= static_cast<std::size_t>(shape[d]);
    }
    std::vector<float> data(numel);
    r.f32s(data.data(), numel, key.c_str());
    shapes.emplace(key, std::move(shape));
    values.emplace(key, std::move(data));
  }
}

void write_moment_map(binio::Writer& w, const std::map<std::string, std::vector<float>>& m) {
  w.u32(static_cast<std::uint32_t>(m.size()));
  for (const auto& [key, data] : m) {
    w.str(key);
    w.u32(static_cast<std::uint32_t>(data.size()));
    w.bytes(data.data(), data.size() * 4);
  }
}

void read_moment_map(binio::Reader& r, std::map<std::string, std::vector<float>>& m) {
  const std::uint32_t count = r.u32("moment count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string key = r.str("moment key");
    const std::uint32_t numel = r.u32(key.c_str());
    std::vector<float> data(numel);
    r.f32s(data.data(), numel, key.c_str());
    m.emplace(key, std::move(data));
  }
}

}  // namespace

const char* stage_name(TrainingStage stage) {
  switch (stage) {
    case TrainingStage::kCrossEntropy: return "cross_entropy";
    case TrainingStage::kWordOracle: return "word_oracle";
    case TrainingStage::kSelfCritical1: return "self_critical_1";
    case TrainingStage::kSelfCritical2: return "self_critical_2";
  }
  return "unknown";
}

Checkpoint make_checkpoint(const CaptionModel& model, const AdamState& adam, TrainingStage stage,
                           int epoch, double best_val_cider, std::uint32_t vocab_hash,
                           std::string config_echo) {
  Checkpoint c;
  c.config_echo = std::move(config_echo);
  c.vocab_hash = vocab_hash;
  c.stage = stage;
  c.epoch = epoch;
  c.best_val_cider = best_val_cider;
  c.model_config = model.config();
  for (const auto& [path, t] : model.params().entries()) {
    c.shapes.emplace(path, t.shape());
    c.values.emplace(path, std::vector<float>(t.values().begin(), t.values().end()));
  }
  c.adam = adam;
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  binio::Writer w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.str(c.config_echo);
  w.u32(c.vocab_hash);
  w.u8(static_cast<std::uint8_t>(c.stage));
  w.u32(static_cast<std::uint32_t>(c.epoch));
  w.f64(c.best_val_cider);

  w.str(c.model_config.decoder);
  w.u32(static_cast<std::uint32_t>(c.model_config.model_dim));
  w.u32(static_cast<std::uint32_t>(c.model_config.attn_dim));
  w.u8(c.model_config.embed_relu ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(c.model_config.vocab_size));
  w.u16(static_cast<std::uint16_t>(c.model_config.modalities.size()));
  for (const auto& [name, dim] : c.model_config.modalities) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(dim));
  }

  write_tensor_map(w, c.shapes, c.values);

  w.u64(static_cast<std::uint64_t>(c.adam.t));
  w.f64(c.adam.lr);
  w.f64(c.adam.beta1);
  w.f64(c.adam.beta2);
  w.f64(c.adam.eps);
  write_moment_map(w, c.adam.m);
  write_moment_map(w, c.adam.v);

  w.u32(crc32(w.buf.data(), w.buf.size()));
  return w.buf;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint: file too short", 0);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic", 0);
  const std::uint32_t stored_crc = [&] {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + bytes.size() - 4, 4);
    return v;
  }();
  const std::uint32_t actual_crc = crc32(bytes.data(), bytes.size() - 4);
  if (stored_crc != actual_crc) {
    throw FormatError("checkpoint: CRC32 mismatch (file corrupt)", bytes.size() - 4);
  }

  binio::Reader r{bytes.first(bytes.size() - 4)};
  r.pos = 4;
  const std::uint16_t version = r.u16("version");
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), 4);
  }

  Checkpoint c;
  c.config_echo = r.str("config echo");
  c.vocab_hash = r.u32("vocab hash");
  const std::uint8_t stage = r.u8("stage");
  if (stage < 1 || stage > 4) {
    throw FormatError("checkpoint: invalid stage " + std::to_string(stage), r.pos - 1);
  }
  c.stage = static_cast<TrainingStage>(stage);
  c.epoch = static_cast<int>(r.u32("epoch"));
  c.best_val_cider = r.f64("best val cider");

  c.model_config.decoder = r.str("decoder kind");
  c.model_config.model_dim = static_cast<int>(r.u32("model dim"));
  c.model_config.attn_dim = static_cast<int>(r.u32("attn dim"));
  c.model_config.embed_relu = r.u8("embed relu") != 0;
  c.model_config.vocab_size = static_cast<int>(r.u32("vocab size"));
  const std::uint16_t n_mod = r.u16("modality count");
  for (std::uint16_t i = 0; i < n_mod; ++i) {
    std::string name = r.str("modality name");
    const int dim = static_cast<int>(r.u32("modality dim"));
    c.model_config.modalities.emplace_back(std::move(name), dim);
  }

  read_tensor_map(r, c.shapes, c.values);

  c.adam.t = static_cast<std::int64_t>(r.u64("adam t"));
  c.adam.lr = r.f64("adam lr");
  c.adam.beta1 = r.f64("adam beta1");
  c.adam.beta2 = r.f64("adam beta2");
  c.adam.eps = r.f64("adam eps");
  read_moment_map(r, c.adam.m);
  read_moment_map(r, c.adam.v);

  if (r.pos != r.buf.size()) {
    throw FormatError("checkpoint: trailing bytes", r.pos);
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  binio::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(binio::read_file(path));
}

CaptionModel model_from_checkpoint(const Checkpoint& ckpt) {
  CaptionModel model(ckpt.model_config, /*seed=*/0);
  auto& entries = model.params().entries();
  if (entries.size() != ckpt.values.size()) {
    throw FormatError("checkpoint: parameter count " + std::to_string(ckpt.values.size()) +
                          " does not match model (" + std::to_string(entries.size()) + ")",
                      0);
  }
  for (auto& [path, t] : entries) {
    const auto it = ckpt.values.find(path);
    if (it == ckpt.values.end()) {
      throw FormatError("checkpoint: missing parameter '" + path + "'", 0);
    }
    if (it->second.size() != t.numel()) {
      throw FormatError("checkpoint: size mismatch for parameter '" + path + "'", 0);
    }
    std::copy(it->second.begin(), it->second.end(), t.values_mut().begin());
  }
  return model;
}

}  // namespace capfuse
