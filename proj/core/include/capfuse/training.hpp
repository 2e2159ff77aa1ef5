#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capfuse/checkpoint.hpp"
#include "capfuse/inference.hpp"
#include "capfuse/rng.hpp"

namespace capfuse {

/// Learning rates and stage transition rules for the three-stage strategy:
/// cross-entropy for a fixed number of epochs, word-level oracle until the
/// validation CIDEr plateaus, then self-critical training in two
/// learning-rate phases under the same plateau rule.
struct StageSchedule {
  int xe_epochs = 5;
  double lr_xe = 5e-4;
  double lr_oracle = 5e-5;
  double lr_sc1 = 5e-5;
  double lr_sc2 = 5e-6;
  int plateau_patience = 2;
  double plateau_min_delta = 1e-4;  // float jitter must not count as growth
  int max_epochs = 500;             // per-stage cap behind "until convergence"
  int batch_size = 16;
  double grad_clip = 5.0;
  double oracle_mu = 12.0;
  int decode_max_len = 30;
};

/// Mean over unmasked positions of -log softmax(logits)[target].
Tensor xe_loss(Tape& tape, const Tensor& logit_rows, std::span<const int> target_ids,
               std::span<const float> pad_mask);

/// Word-level oracle input selection: returns the ground-truth id with
/// probability mu / (mu + exp(epoch / mu)), otherwise the argmax of
/// logits + Gumbel noise. `noise` false (a test hook) makes the fallback the
/// plain argmax.
int oracle_next_input(int gt_id, std::span<const float> logits, int epoch, double mu, Rng& rng,
                      bool noise = true);

/// Probability of feeding the ground-truth word at the given oracle epoch.
double oracle_gt_probability(int epoch, double mu);

using RewardFn =
    std::function<double(const std::vector<int>& caption, const std::vector<std::vector<int>>& refs)>;

struct ScstOut {
  Tensor loss;  // surrogate: -(r_sampled - r_greedy) * sum of sampled log-probs
  double reward_sampled = 0.0;
  double reward_greedy = 0.0;
  std::vector<int> sampled;
  std::vector<int> greedy;
};

/// Self-critical loss for one video: one multinomial sample, one greedy decode
/// with the same parameters, advantage-weighted log-probability surrogate.
/// Gradients flow only through the sampled log-probabilities.
ScstOut scst_loss(Tape& tape, const CaptionModel& model, const FeatureBundle& bundle,
                  const std::vector<std::vector<int>>& refs, const RewardFn& reward, Rng& rng,
                  int max_len = 30);

/// The default SCST/eval reward: 0.5 * CIDEr-D + 0.5 * smoothed sentence
/// BLEU-4 against the record's references, with CIDEr document frequencies
/// from `idf_refs` (typically the training corpus).
RewardFn make_reward_fn(const Vocab& vocab, const std::vector<std::vector<std::vector<int>>>& idf_refs);

/// Greedy-decodes every video and averages the reward; used to witness
/// self-critical improvement on held-out data.
double mean_reward(const CaptionModel& model, const Dataset& data, const RewardFn& reward,
                   int max_len = 30);

/// Greedy-decode validation CIDEr-D (the plateau metric).
double validation_cider(const CaptionModel& model, const Dataset& val, int max_len = 30);

struct EpochLog {
  std::string stage;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double val_cider = 0.0;
};

struct TrainOptions {
  std::uint64_t seed = 42;
  std::string log_path;   // JSON-lines epoch log, one object per epoch
  std::string ckpt_dir;   // per-stage checkpoints when non-empty
  std::uint32_t vocab_hash = 0;
  std::string config_echo;
  TrainingStage stop_after = TrainingStage::kSelfCritical2;
  std::optional<int> xe_epochs_override;  // acceptance runs stretch stage 1
  const Checkpoint* resume = nullptr;
  /// Validation metric override (tests mock this); default greedy CIDEr-D.
  std::function<double(const CaptionModel&)> val_metric;
  /// Invoked after every epoch; returning false stops the whole schedule
  /// (used by callers that have already observed their success condition).
  std::function<bool(const CaptionModel&, TrainingStage, int epoch)> epoch_callback;
};

struct TrainResult {
  Checkpoint final;
  std::vector<EpochLog> log;
};

/// Runs the staged schedule: stage 1 for exactly xe_epochs at lr_xe, stage 2
/// at lr_oracle until the validation metric stops improving for
/// plateau_patience consecutive epochs, stage 3 at lr_sc1 then lr_sc2 under
/// the same plateau rule. The best-on-validation parameters are retained at
/// each plateau-driven stage boundary.
TrainResult run_stage_schedule(CaptionModel& model, const Dataset& train, const Dataset& val,
                               const StageSchedule& schedule, const TrainOptions& options);

void write_epoch_log(const std::vector<EpochLog>& log, const std::string& path);

}  // namespace capfuse
