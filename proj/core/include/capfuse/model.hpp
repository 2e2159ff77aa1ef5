#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "capfuse/decoders.hpp"
#include "capfuse/fusion.hpp"

namespace capfuse {

struct ModelConfig {
  std::string decoder = "topdown";  // "topdown" | "xlan"
  int model_dim = 64;
  int attn_dim = 0;  // 0 -> model_dim
  bool embed_relu = true;
  int vocab_size = 0;
  std::vector<std::pair<std::string, int>> modalities;  // name -> input dim, order fixed

  int effective_attn_dim() const { return attn_dim > 0 ? attn_dim : model_dim; }
  void validate() const;
};

/// Opaque per-sequence decoder state; the slot layout depends on the decoder
/// kind (topdown: h1, h2; xlan: h, c, m).
struct DecoderState {
  std::vector<Tensor> slots;
};

/// A full captioning model: modality embeddings, feature attention, word
/// embedding table, one of the two decoders and the output projection, all
/// keyed in a single ParamStore.
class CaptionModel {
 public:
  /// Fresh Xavier-initialized model.
  CaptionModel(ModelConfig config, std::uint64_t seed);
  /// Rebinds parameter structures onto an existing store (checkpoint load).
  CaptionModel(ModelConfig config, ParamStore store);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Embeds every modality of a frame-aligned bundle.
  std::vector<Tensor> embed(Tape& tape, const FeatureBundle& bundle) const;

  DecoderState initial_state() const;

  /// One decode step: previous word in, vocabulary logits out.
  StepResult step(Tape& tape, DecoderState& state, int prev_word_id,
                  const std::vector<Tensor>& v) const;

 private:
  void bind_params();

  ModelConfig config_;
  ParamStore params_;
  Tensor embed_table_;
  FusionParams fusion_;
  std::optional<TopDownParams> topdown_;
  std::optional<XlanParams> xlan_;
};

}  // namespace capfuse
