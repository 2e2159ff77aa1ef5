#include "capfuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace capfuse {

Tensor xe_loss(Tape& tape, const Tensor& logit_rows, std::span<const int> target_ids,
               std::span<const float> pad_mask) {
  if (logit_rows.rank() != 2 || static_cast<std::size_t>(logit_rows.dim(0)) != target_ids.size() ||
      target_ids.size() != pad_mask.size()) {
    throw ShapeError("xe_loss: logits " + shape_to_string(logit_rows.shape()) + " vs " +
                     std::to_string(target_ids.size()) + " targets, " +
                     std::to_string(pad_mask.size()) + " mask entries");
  }
  double mask_total = 0.0;
  for (const float m : pad_mask) mask_total += m;
  if (mask_total <= 0.0) throw DataError("xe_loss: fully masked sequence");

  Tensor lsm = log_softmax(tape, logit_rows, /*axis=*/1);
  Tensor picked = gather_cols(tape, lsm, target_ids);
  Tensor mask = Tensor::leaf({static_cast<int>(pad_mask.size())},
                             std::vector<float>(pad_mask.begin(), pad_mask.end()));
  Tensor masked = mul(tape, picked, mask);
  return scalar_mul(tape, sum(tape, masked, 0), static_cast<float>(-1.0 / mask_total));
}

double oracle_gt_probability(int epoch, double mu) {
  return mu / (mu + std::exp(static_cast<double>(epoch) / mu));
}

int oracle_next_input(int gt_id, std::span<const float> logits, int epoch, double mu, Rng& rng,
                      bool noise) {
  if (rng.uniform() < oracle_gt_probability(epoch, mu)) return gt_id;
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < logits.size(); ++v) {
    double score = logits[v];
    if (noise) {
      double u = rng.uniform();
      u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
      score += -std::log(-std::log(u));  // Gumbel(0,1)
    }
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(v);
    }
  }
  return best;
}

namespace {

// Teacher-forced (stage 1) or oracle-fed (stage 2) sequence loss.
Tensor sequence_xe_loss(Tape& tape, const CaptionModel& model, const FeatureBundle& bundle,
                        const std::vector<int>& reference, bool oracle_inputs, int oracle_epoch,
                        double mu, Rng& rng) {
  const auto embedded = model.embed(tape, bundle);
  DecoderState state = model.initial_state();
  std::vector<Tensor> logits;
  logits.reserve(reference.size());
  int prev = Vocab::kBos;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    const StepResult r = model.step(tape, state, prev, embedded);
    logits.push_back(r.logits);
    if (oracle_inputs) {
      const auto lv = r.logits.values();
      prev = oracle_next_input(reference[t], lv, oracle_epoch, mu, rng);
    } else {
      prev = reference[t];
    }
  }
  Tensor rows = stack_rows(tape, logits);
  const std::vector<float> mask(reference.size(), 1.0f);
  return xe_loss(tape, rows, reference, mask);
}

std::vector<int> strip_eos(std::vector<int> ids) {
  if (!ids.empty() && ids.back() == Vocab::kEos) ids.pop_back();
  return ids;
}

}  // namespace

ScstOut scst_loss(Tape& tape, const CaptionModel& model, const FeatureBundle& bundle,
                  const std::vector<std::vector<int>>& refs, const RewardFn& reward, Rng& rng,
                  int max_len) {
  ScstOut out;
  const auto embedded = model.embed(tape, bundle);
  DecoderState state = model.initial_state();
  std::vector<Tensor> logp_terms;
  int prev = Vocab::kBos;
  for (int t = 0; t < max_len; ++t) {
    const StepResult r = model.step(tape, state, prev, embedded);
    Tensor lsm = log_softmax(tape, r.logits, 0);
    // Multinomial draw from the step distribution.
    const auto lv = lsm.values();
    const double u = rng.uniform();
    double cdf = 0.0;
    int pick = static_cast<int>(lv.size()) - 1;
    for (std::size_t v = 0; v < lv.size(); ++v) {
      cdf += std::exp(static_cast<double>(lv[v]));
      if (u < cdf) {
        pick = static_cast<int>(v);
        break;
      }
    }
    logp_terms.push_back(slice(tape, lsm, 0, pick, 1));
    if (pick == Vocab::kEos) break;
    out.sampled.push_back(pick);
    prev = pick;
  }

  out.greedy = greedy_decode({&model}, bundle, max_len);
  out.reward_sampled = reward(out.sampled, refs);
  out.reward_greedy = reward(out.greedy, refs);
  const double advantage = out.reward_sampled - out.reward_greedy;

  Tensor total = concat(tape, logp_terms, 0);
  out.loss = scalar_mul(tape, sum(tape, total, 0), static_cast<float>(-advantage));
  return out;
}

RewardFn make_reward_fn(const Vocab& vocab,
                        const std::vector<std::vector<std::vector<int>>>& idf_refs) {
  auto corpus = std::make_shared<std::vector<std::vector<metrics::Tokens>>>();
  corpus->reserve(idf_refs.size());
  for (const auto& refs : idf_refs) {
    std::vector<metrics::Tokens> decoded;
    decoded.reserve(refs.size());
    for (const auto& r : refs) decoded.push_back(vocab.decode(r));
    corpus->push_back(std::move(decoded));
  }
  auto scorer = std::make_shared<metrics::CiderScorer>(*corpus);
  const Vocab vocab_copy = vocab;
  return [scorer, vocab_copy](const std::vector<int>& caption,
                              const std::vector<std::vector<int>>& refs) {
    const metrics::Tokens cand = vocab_copy.decode(strip_eos(caption));
    std::vector<metrics::Tokens> ref_tokens;
    ref_tokens.reserve(refs.size());
    for (const auto& r : refs) ref_tokens.push_back(vocab_copy.decode(r));
    const double cider = scorer->score(cand, ref_tokens);
    const double bleu = metrics::sentence_bleu4_smoothed(cand, ref_tokens);
    return 0.5 * cider + 0.5 * bleu;
  };
}

double mean_reward(const CaptionModel& model, const Dataset& data, const RewardFn& reward,
                   int max_len) {
  if (data.bundles.empty()) throw DataError("mean_reward: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < data.bundles.size(); ++i) {
    const auto caption = greedy_decode({&model}, data.bundles[i], max_len);
    total += reward(caption, data.records[i].references);
  }
  return total / static_cast<double>(data.bundles.size());
}

double validation_cider(const CaptionModel& model, const Dataset& val, int max_len) {
  std::vector<metrics::Tokens> candidates;
  std::vector<std::vector<metrics::Tokens>> references;
  candidates.reserve(val.bundles.size());
  for (std::size_t i = 0; i < val.bundles.size(); ++i) {
    candidates.push_back(val.vocab.decode(greedy_decode({&model}, val.bundles[i], max_len)));
    std::vector<metrics::Tokens> refs;
    for (const auto& r : val.records[i].references) refs.push_back(val.vocab.decode(r));
    references.push_back(std::move(refs));
  }
  return metrics::cider_d(candidates, references).corpus_mean;
}

void write_epoch_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const EpochLog& e : log) {
    nlohmann::ordered_json j;
    j["stage"] = e.stage;
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["loss"] = e.loss;
    j["val_cider"] = e.val_cider;
    out << j.dump() << "\n";
  }
}

namespace {

struct StageRunner {
  CaptionModel& model;
  const Dataset& train;
  const StageSchedule& schedule;
  const TrainOptions& options;
  AdamState& adam;
  std::vector<EpochLog>& log;
  RewardFn reward;
  double& best_val;  // carried across stages: plateau compares against it
  bool stop_requested = false;

  bool after_epoch(TrainingStage stage, int epoch) {
    if (options.epoch_callback && !options.epoch_callback(model, stage, epoch)) {
      stop_requested = true;
    }
    return !stop_requested;
  }

  double eval_val() const { return options.val_metric(model); }

  void check_finite(double loss, TrainingStage stage, int epoch) const {
    if (!std::isfinite(loss)) {
      throw NumericError(std::string("training aborted: non-finite loss in stage ") +
                         stage_name(stage) + " epoch " + std::to_string(epoch));
    }
  }

  // One epoch over all (video, reference) pairs with teacher forcing or
  // oracle inputs; returns the mean sequence loss.
  double xe_epoch(TrainingStage stage, int epoch, bool oracle_inputs, int oracle_epoch) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t v = 0; v < train.bundles.size(); ++v) {
      for (std::size_t r = 0; r < train.records[v].references.size(); ++r) pairs.emplace_back(v, r);
    }
    Rng shuffle_rng(Rng::mix(Rng::mix(options.seed, stage_name(stage)),
                             static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = pairs.size(); i > 1; --i) {
      std::swap(pairs[i - 1], pairs[static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i)))]);
    }
    Rng oracle_rng(Rng::mix(Rng::mix(options.seed, "oracle"), static_cast<std::uint64_t>(epoch)));

    double total_loss = 0.0;
    std::size_t done = 0;
    while (done < pairs.size()) {
      const std::size_t batch_end =
          std::min(pairs.size(), done + static_cast<std::size_t>(schedule.batch_size));
      const auto batch_n = static_cast<float>(batch_end - done);
      model.params().zero_grad();
      for (std::size_t i = done; i < batch_end; ++i) {
        const auto& [v, r] = pairs[i];
        Tape tape;
        Tensor loss = sequence_xe_loss(tape, model, train.bundles[v],
                                       train.records[v].references[r], oracle_inputs,
                                       oracle_epoch, schedule.oracle_mu, oracle_rng);
        total_loss += loss.item();
        check_finite(loss.item(), stage, epoch);
        tape.backward(scalar_mul(tape, loss, 1.0f / batch_n));
      }
      clip_global_grad_norm(model.params(), schedule.grad_clip);
      adam_step(model.params(), adam);
      done = batch_end;
    }
    return total_loss / static_cast<double>(pairs.size());
  }

  double scst_epoch(TrainingStage stage, int epoch) {
    std::vector<std::size_t> order(train.bundles.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(Rng::mix(Rng::mix(options.seed, stage_name(stage)),
                             static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i)))]);
    }
    Rng sample_rng(Rng::mix(Rng::mix(options.seed, "scst_sample"),
                            static_cast<std::uint64_t>(epoch) * 1315423911ULL +
                                static_cast<std::uint64_t>(stage)));

    double total_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), done + static_cast<std::size_t>(schedule.batch_size));
      const auto batch_n = static_cast<float>(batch_end - done);
      model.params().zero_grad();
      for (std::size_t i = done; i < batch_end; ++i) {
        const std::size_t v = order[i];
        Tape tape;
        ScstOut out = scst_loss(tape, model, train.bundles[v], train.records[v].references,
                                reward, sample_rng, schedule.decode_max_len);
        total_loss += out.loss.item();
        check_finite(out.loss.item(), stage, epoch);
        tape.backward(scalar_mul(tape, out.loss, 1.0f / batch_n));
      }
      clip_global_grad_norm(model.params(), schedule.grad_clip);
      adam_step(model.params(), adam);
      done = batch_end;
    }
    return total_loss / static_cast<double>(order.size());
  }

  // Fixed-epoch stage (cross-entropy). Final weights are kept as-is.
  void run_fixed(TrainingStage stage, double lr, int n_epochs, int start_epoch) {
    adam.lr = lr;
    for (int epoch = start_epoch; epoch <= n_epochs; ++epoch) {
      const double loss = xe_epoch(stage, epoch, false, 0);
      const double val = eval_val();
      best_val = std::max(best_val, val);
      log.push_back({stage_name(stage), epoch, lr, loss, val});
      if (!after_epoch(stage, epoch)) return;
    }
  }

  // Plateau-terminated stage; restores the best-on-validation parameters
  // (including the entry parameters as epoch-0 candidate) on exit.
  void run_plateau(TrainingStage stage, double lr, int start_epoch) {
    adam.lr = lr;
    auto best_params = model.params().snapshot_values();
    double stage_best = eval_val();
    best_val = std::max(best_val, stage_best);
    int streak = 0;
    for (int epoch = start_epoch; epoch <= schedule.max_epochs; ++epoch) {
      double loss = 0.0;
      if (stage == TrainingStage::kWordOracle) {
        loss = xe_epoch(stage, epoch, true, epoch - 1);
      } else {
        loss = scst_epoch(stage, epoch);
      }
      const double val = eval_val();
      log.push_back({stage_name(stage), epoch, lr, loss, val});
      if (val > stage_best + schedule.plateau_min_delta) {
        stage_best = val;
        streak = 0;
        best_params = model.params().snapshot_values();
      } else {
        ++streak;
      }
      if (val > best_val) best_val = val;
      if (!after_epoch(stage, epoch)) break;
      if (streak >= schedule.plateau_patience) break;
    }
    model.params().restore_values(best_params);
  }
};

}  // namespace

TrainResult run_stage_schedule(CaptionModel& model, const Dataset& train, const Dataset& val,
                               const StageSchedule& schedule, const TrainOptions& options) {
  if (train.bundles.empty() || val.bundles.empty()) {
    throw DataError("run_stage_schedule: empty train or validation set");
  }
  train.validate();
  val.validate();

  TrainOptions opts = options;
  if (!opts.val_metric) {
    opts.val_metric = [&val, &schedule](const CaptionModel& m) {
      return validation_cider(m, val, schedule.decode_max_len);
    };
  }

  AdamState adam;
  double best_val = -std::numeric_limits<double>::infinity();
  TrainingStage resume_stage = TrainingStage::kCrossEntropy;
  int resume_epoch = 0;
  if (opts.resume != nullptr) {
    adam = opts.resume->adam;
    best_val = opts.resume->best_val_cider;
    resume_stage = opts.resume->stage;
    resume_epoch = opts.resume->epoch;
  }

  std::vector<EpochLog> log;
  std::vector<std::vector<std::vector<int>>> train_refs;
  train_refs.reserve(train.records.size());
  for (const auto& r : train.records) train_refs.push_back(r.references);

  StageRunner runner{model,  train, schedule, opts, adam,
                     log,    make_reward_fn(train.vocab, train_refs), best_val};

  const auto stage_index = [](TrainingStage s) { return static_cast<int>(s); };
  const int resume_at = stage_index(resume_stage);
  const int stop_at = stage_index(opts.stop_after);

  const auto start_epoch_for = [&](TrainingStage s) {
    return stage_index(s) == resume_at ? resume_epoch + 1 : 1;
  };

  const int xe_epochs = opts.xe_epochs_override.value_or(schedule.xe_epochs);
  TrainingStage last_stage = TrainingStage::kCrossEntropy;
  int last_epoch = 0;

  const auto run_stage = [&](TrainingStage s) {
    if (stage_index(s) < resume_at || stage_index(s) > stop_at || runner.stop_requested) return;
    const int start = start_epoch_for(s);
    switch (s) {
      case TrainingStage::kCrossEntropy:
        runner.run_fixed(s, schedule.lr_xe, xe_epochs, start);
        break;
      case TrainingStage::kWordOracle:
        runner.run_plateau(s, schedule.lr_oracle, start);
        break;
      case TrainingStage::kSelfCritical1:
        runner.run_plateau(s, schedule.lr_sc1, start);
        break;
      case TrainingStage::kSelfCritical2:
        runner.run_plateau(s, schedule.lr_sc2, start);
        break;
    }
    last_stage = s;
    const bool ran_epochs = !log.empty() && log.back().stage == stage_name(s);
    last_epoch = ran_epochs ? log.back().epoch : start - 1;
    if (!opts.ckpt_dir.empty()) {
      const Checkpoint c = make_checkpoint(model, adam, s, last_epoch, best_val, opts.vocab_hash,
                                           opts.config_echo);
      save_checkpoint(opts.ckpt_dir + "/stage" + std::to_string(stage_index(s)) + ".ckpt", c);
    }
  };

  run_stage(TrainingStage::kCrossEntropy);
  run_stage(TrainingStage::kWordOracle);
  run_stage(TrainingStage::kSelfCritical1);
  run_stage(TrainingStage::kSelfCritical2);

  if (!opts.log_path.empty()) write_epoch_log(log, opts.log_path);

  TrainResult result;
  result.final = make_checkpoint(model, adam, last_stage, last_epoch, best_val, opts.vocab_hash,
                                 opts.config_echo);
  result.log = std::move(log);
  return result;
}

}  // namespace capfuse
