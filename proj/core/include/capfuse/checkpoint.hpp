#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capfuse/adam.hpp"
#include "capfuse/model.hpp"

namespace capfuse {

// Training stages, in transition order.
enum class TrainingStage : int {
  kCrossEntropy = 1,
  kWordOracle = 2,
  kSelfCritical1 = 3,
  kSelfCritical2 = 4,
};

const char* stage_name(TrainingStage stage);

/// Everything needed to resume or evaluate a run: parameters keyed by path,
/// optimizer state, config echo, vocab content hash, stage/epoch position and
/// the best validation CIDEr seen so far.
///
/// Binary format: magic "CFCK", version u16, then length-prefixed fields and
/// key/tensor records (little-endian f32) with a trailing CRC32 over all
/// preceding bytes.
struct Checkpoint {
  std::string config_echo;
  std::uint32_t vocab_hash = 0;
  TrainingStage stage = TrainingStage::kCrossEntropy;
  int epoch = 0;  // last completed epoch within the stage
  double best_val_cider = 0.0;
  ModelConfig model_config;
  std::map<std::string, Shape> shapes;
  std::map<std::string, std::vector<float>> values;
  AdamState adam;
};

Checkpoint make_checkpoint(const CaptionModel& model, const AdamState& adam,
                           TrainingStage stage, int epoch, double best_val_cider,
                           std::uint32_t vocab_hash, std::string config_echo = {});

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Builds a model with the checkpoint's config and overwrites every parameter
/// with the stored values (bit-exact round trip).
CaptionModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace capfuse
