#pragma once

#include <string>
#include <vector>

#include "capfuse/model.hpp"
#include "capfuse/training.hpp"

namespace capfuse {

/// Run configuration for the CLI: flat key=value text with dotted sections
/// (e.g. `model.dim=64`). Unknown keys are rejected. Flags override file
/// values; the CAPFUSE_SEED environment variable overrides the seed.
struct RunConfig {
  std::uint64_t seed = 42;

  struct Paths {
    std::string features;
    std::string captions;
    std::string val_features;
    std::string val_captions;
    std::string vocab;
    std::string attrs;
    std::string checkpoint_dir = ".";
    std::string log;
    bool operator==(const Paths&) const = default;
  } paths;

  struct Model {
    std::string decoder = "topdown";
    int dim = 64;
    int attn_dim = 0;
    bool embed_relu = true;
    bool operator==(const Model&) const = default;
  } model;

  struct Data {
    int frames = 8;
    int videos = 32;
    int val_videos = 8;
    int vocab_size = 24;
    int min_caption_len = 4;
    int max_caption_len = 7;
    double noise_sigma = 0.1;
    int min_count = 5;
    int tokenizer_max_len = 30;
    std::vector<std::pair<std::string, int>> modalities = {
        {"motion", 24}, {"appearance", 16}, {"audio", 8}, {"semantic", 12}};
    bool operator==(const Data&) const = default;
  } data;

  StageSchedule train;

  struct Decode {
    int beam = 3;
    int max_len = 30;
    double length_alpha = 0.0;
    bool operator==(const Decode&) const = default;
  } decode;

  struct Eval {
    int jobs = 1;
    bool operator==(const Eval&) const = default;
  } eval;

  bool operator==(const RunConfig&) const = default;
};

bool operator==(const StageSchedule& a, const StageSchedule& b);

/// Profile defaults: "desk" (dim 64, 32 videos, 8 frames) or "paper"
/// (dim 512, 32 frames, the published learning rates).
RunConfig profile_config(const std::string& profile);

/// Parses key=value lines ('#' comments allowed) on top of `base`.
RunConfig parse_config_text(const std::string& text, RunConfig base);
RunConfig load_config_file(const std::string& path, RunConfig base);

void apply_override(RunConfig& config, const std::string& key_value);

/// Applies CAPFUSE_SEED when set (must parse as an unsigned integer).
void apply_env_seed(RunConfig& config);

/// Fixed key order, round-trip stable: parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& config);

}  // namespace capfuse
