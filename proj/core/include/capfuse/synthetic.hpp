#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "capfuse/data.hpp"

namespace capfuse {

/// Deterministic synthetic dataset: every video carries a latent token
/// sequence; each modality matrix is a fixed random projection of the one-hot
/// token codes laid across frames, plus Gaussian noise. Captions are
/// recoverable from the features by construction, so small models can overfit.
struct SyntheticSpec {
  std::uint64_t seed = 42;
  int n_videos = 32;
  int n_frames = 8;
  std::vector<std::pair<std::string, int>> modality_dims = {
      {"motion", 24}, {"appearance", 16}, {"audio", 8}, {"semantic", 12}};
  int vocab_size = 24;  // includes the 4 reserved ids
  int max_caption_len = 7;
  int min_caption_len = 4;
  double noise_sigma = 0.1;
  double paraphrase_dropout = 0.1;
  int n_paraphrases = 2;
};

struct SyntheticData {
  std::vector<FeatureBundle> bundles;
  std::vector<CaptionRecord> captions;
  Vocab vocab;
};

SyntheticData gen_synthetic(const SyntheticSpec& spec);

/// The fixed projection used for one modality (vocab_size x dim). Exposed so
/// tests can decode noiseless features back to tokens.
Matrix synthetic_projection(std::uint64_t seed, const std::string& modality, int dim,
                            int vocab_size);

/// Caption strings for the generated records (latent + paraphrases), suitable
/// for write_captions_jsonl.
std::vector<RawCaptions> synthetic_raw_captions(const SyntheticData& data);

}  // namespace capfuse
