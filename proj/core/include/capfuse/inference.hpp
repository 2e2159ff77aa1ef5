#pragma once

#include <string>
#include <vector>

#include "capfuse/data.hpp"
#include "capfuse/metrics.hpp"
#include "capfuse/model.hpp"

namespace capfuse {

/// Aligned bundles, caption records (parallel by index) and their vocab.
struct Dataset {
  std::vector<FeatureBundle> bundles;
  std::vector<CaptionRecord> records;
  Vocab vocab;

  void validate() const;
};

/// Beam search element: generated token ids (bos implied, eos stripped),
/// cumulative log-probability of the full sequence including eos when
/// finished, and the per-model state snapshots.
struct DecodeHypothesis {
  std::vector<int> ids;
  double log_prob = 0.0;
  bool finished = false;
  std::vector<DecoderState> states;
};

/// Greedy decoding over an ensemble: per-step softmax distributions are
/// averaged arithmetically, argmax appended (ties break to the lowest id),
/// stop at eos or max_len. Returns generated token ids without bos/eos.
std::vector<int> greedy_decode(const std::vector<const CaptionModel*>& models,
                               const FeatureBundle& bundle, int max_len = 30);

struct BeamResult {
  std::vector<int> best;
  std::vector<DecodeHypothesis> finished;  // sorted by normalized score
};

/// Standard beam expansion over ensemble-averaged distributions. Finished
/// hypotheses are scored by log_prob / len^length_alpha with deterministic
/// tie-breaking by token sequence.
BeamResult beam_search(const std::vector<const CaptionModel*>& models, const FeatureBundle& bundle,
                       int beam, int max_len = 30, double length_alpha = 0.0);

struct EvalOutput {
  metrics::MetricReport scores;
  std::vector<std::pair<std::string, std::vector<std::string>>> captions;  // id -> tokens
};

/// Decodes every video (beam search) and scores against the dataset
/// references. `jobs` > 1 decodes videos in parallel worker threads over the
/// frozen models.
EvalOutput ensemble_eval(const std::vector<const CaptionModel*>& models, const Dataset& data,
                         int beam = 3, int max_len = 30, int jobs = 1);

}  // namespace capfuse
