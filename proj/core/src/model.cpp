#include "capfuse/model.hpp"

namespace capfuse {

void ModelConfig::validate() const {
  if (decoder != "topdown" && decoder != "xlan") {
    throw ConfigError("model: unknown decoder '" + decoder + "' (expected topdown or xlan)");
  }
  if (model_dim < 1) throw ConfigError("model: model_dim must be positive");
  if (vocab_size < Vocab::kNumReserved + 1) {
    throw ConfigError("model: vocab_size " + std::to_string(vocab_size) + " too small");
  }
  if (modalities.empty()) throw ConfigError("model: no modalities configured");
  for (const auto& [name, dim] : modalities) {
    if (dim < 1) throw ConfigError("model: modality '" + name + "' has non-positive dim");
  }
}

CaptionModel::CaptionModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(Rng::mix(seed, "model_init"));
  const int d = config_.model_dim;
  const int a = config_.effective_attn_dim();
  embed_table_ = params_.add("embed.table", xavier_uniform(config_.vocab_size, d, rng));
  fusion_ = FusionParams::init(params_, "fusion", config_.modalities, d, a, /*h_dim=*/d,
                               config_.embed_relu, rng);
  if (config_.decoder == "topdown") {
    topdown_ = TopDownParams::init(params_, "topdown", d, a, config_.vocab_size, rng);
  } else {
    xlan_ = XlanParams::init(params_, "xlan", d, a, config_.vocab_size, rng);
  }
}

CaptionModel::CaptionModel(ModelConfig config, ParamStore store)
    : config_(std::move(config)), params_(std::move(store)) {
  config_.validate();
  bind_params();
}

void CaptionModel::bind_params() {
  embed_table_ = params_.at("embed.table");
  fusion_ = FusionParams::bind(params_, "fusion", config_.modalities, config_.embed_relu);
  if (config_.decoder == "topdown") {
    topdown_ = TopDownParams::bind(params_, "topdown");
  } else {
    xlan_ = XlanParams::bind(params_, "xlan");
  }
}

std::vector<Tensor> CaptionModel::embed(Tape& tape, const FeatureBundle& bundle) const {
  return embed_modalities(tape, bundle, fusion_);
}

DecoderState CaptionModel::initial_state() const {
  DecoderState s;
  const int d = config_.model_dim;
  if (config_.decoder == "topdown") {
    s.slots = {Tensor::zeros({d}), Tensor::zeros({d})};
  } else {
    s.slots = {Tensor::zeros({d}), Tensor::zeros({d}), Tensor::zeros({d})};
  }
  return s;
}

StepResult CaptionModel::step(Tape& tape, DecoderState& state, int prev_word_id,
                              const std::vector<Tensor>& v) const {
  if (config_.decoder == "topdown") {
    TopDownState td{state.slots[0], state.slots[1]};
    StepResult r = topdown_step(tape, td, prev_word_id, v, embed_table_, fusion_, *topdown_);
    state.slots = {td.h1, td.h2};
    return r;
  }
  XlanState xs{state.slots[0], state.slots[1], state.slots[2]};
  StepResult r = xlan_step(tape, xs, prev_word_id, v, embed_table_, fusion_, *xlan_);
  state.slots = {xs.h, xs.c, xs.m};
  return r;
}

}  // namespace capfuse
