#include "capfuse/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "capfuse/ops.hpp"

namespace capfuse {

void Dataset::validate() const {
  if (bundles.size() != records.size()) {
    throw DataError("dataset: " + std::to_string(bundles.size()) + " bundles vs " +
                    std::to_string(records.size()) + " caption records");
  }
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (bundles[i].video_id != records[i].video_id) {
      throw DataError("dataset: bundle/record id mismatch at index " + std::to_string(i) + " ('" +
                      bundles[i].video_id + "' vs '" + records[i].video_id + "')");
    }
  }
}

namespace {

void check_ensemble(const std::vector<const CaptionModel*>& models) {
  if (models.empty()) throw DataError("decode: empty model list");
  const int vocab = models[0]->config().vocab_size;
  for (const CaptionModel* m : models) {
    if (m->config().vocab_size != vocab) {
      throw DataError("decode: ensemble models disagree on vocab size (" + std::to_string(vocab) +
                      " vs " + std::to_string(m->config().vocab_size) + ")");
    }
  }
}

// Ensemble-averaged next-word distribution after feeding `prev` to each model;
// states are advanced in place.
std::vector<double> ensemble_step(Tape& tape, const std::vector<const CaptionModel*>& models,
                                  std::vector<DecoderState>& states,
                                  const std::vector<std::vector<Tensor>>& embedded, int prev) {
  const int vocab = models[0]->config().vocab_size;
  std::vector<double> mean_probs(static_cast<std::size_t>(vocab), 0.0);
  for (std::size_t k = 0; k < models.size(); ++k) {
    const StepResult r = models[k]->step(tape, states[k], prev, embedded[k]);
    const Tensor probs = softmax(tape, r.logits, 0);
    const auto pv = probs.values();
    for (int v = 0; v < vocab; ++v) mean_probs[v] += pv[v];
  }
  for (double& p : mean_probs) p /= static_cast<double>(models.size());
  return mean_probs;
}

std::vector<std::vector<Tensor>> embed_all(Tape& tape,
                                           const std::vector<const CaptionModel*>& models,
                                           const FeatureBundle& bundle) {
  std::vector<std::vector<Tensor>> embedded;
  embedded.reserve(models.size());
  for (const CaptionModel* m : models) embedded.push_back(m->embed(tape, bundle));
  return embedded;
}

}  // namespace

std::vector<int> greedy_decode(const std::vector<const CaptionModel*>& models,
                               const FeatureBundle& bundle, int max_len) {
  check_ensemble(models);
  Tape tape;
  auto embedded = embed_all(tape, models, bundle);
  std::vector<DecoderState> states;
  states.reserve(models.size());
  for (const CaptionModel* m : models) states.push_back(m->initial_state());

  std::vector<int> ids;
  int prev = Vocab::kBos;
  for (int t = 0; t < max_len; ++t) {
    const auto probs = ensemble_step(tape, models, states, embedded, prev);
    int best = 0;
    for (int v = 1; v < static_cast<int>(probs.size()); ++v) {
      if (probs[v] > probs[best]) best = v;
    }
    if (best == Vocab::kEos) break;
    ids.push_back(best);
    prev = best;
  }
  return ids;
}

BeamResult beam_search(const std::vector<const CaptionModel*>& models, const FeatureBundle& bundle,
                       int beam, int max_len, double length_alpha) {
  check_ensemble(models);
  if (beam < 1) throw DataError("beam_search: beam must be >= 1");

  Tape tape;
  auto embedded = embed_all(tape, models, bundle);

  DecodeHypothesis root;
  for (const CaptionModel* m : models) root.states.push_back(m->initial_state());
  std::vector<DecodeHypothesis> live = {std::move(root)};
  std::vector<DecodeHypothesis> finished;

  const auto normalized = [length_alpha](const DecodeHypothesis& h) {
    const double len = std::max<std::size_t>(1, h.ids.size());
    return h.log_prob / std::pow(len, length_alpha);
  };

  for (int t = 0; t < max_len && !live.empty(); ++t) {
    struct Cand {
      double score;
      std::size_t parent;
      int token;
    };
    std::vector<Cand> cands;
    std::vector<std::vector<DecoderState>> advanced(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      advanced[i] = live[i].states;
      const int prev = live[i].ids.empty() ? Vocab::kBos : live[i].ids.back();
      const auto probs = ensemble_step(tape, models, advanced[i], embedded, prev);
      for (int v = 0; v < static_cast<int>(probs.size()); ++v) {
        const double lp = probs[v] > 0.0 ? std::log(probs[v])
                                         : -std::numeric_limits<double>::infinity();
        cands.push_back({live[i].log_prob + lp, i, v});
      }
    }
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      // Deterministic tie-break: lexicographically smaller extended sequence.
      const auto& ia = live[a.parent].ids;
      const auto& ib = live[b.parent].ids;
      if (ia != ib) return ia < ib;
      return a.token < b.token;
    });

    // Top `beam` candidates overall; an eos candidate finishes its hypothesis
    // and still consumes a slot (beam = 1 therefore reproduces greedy).
    std::vector<DecodeHypothesis> next_live;
    int taken = 0;
    for (const Cand& c : cands) {
      if (taken >= beam) break;
      ++taken;
      DecodeHypothesis h;
      h.ids = live[c.parent].ids;
      h.log_prob = c.score;
      h.states = advanced[c.parent];
      if (c.token == Vocab::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        h.ids.push_back(c.token);
        next_live.push_back(std::move(h));
      }
    }
    live = std::move(next_live);
  }
  // Hypotheses still live at max_len finish by truncation.
  for (DecodeHypothesis& h : live) {
    h.finished = true;
    finished.push_back(std::move(h));
  }
  if (finished.empty()) throw NumericError("beam_search: no finished hypotheses");

  std::stable_sort(finished.begin(), finished.end(),
                   [&](const DecodeHypothesis& a, const DecodeHypothesis& b) {
                     const double sa = normalized(a), sb = normalized(b);
                     if (sa != sb) return sa > sb;
                     return a.ids < b.ids;
                   });
  BeamResult result;
  result.best = finished.front().ids;
  result.finished = std::move(finished);
  return result;
}

EvalOutput ensemble_eval(const std::vector<const CaptionModel*>& models, const Dataset& data,
                         int beam, int max_len, int jobs) {
  check_ensemble(models);
  data.validate();
  std::vector<std::string> missing;
  for (const auto& rec : data.records) {
    if (rec.references.empty()) missing.push_back(rec.video_id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    throw DataError("ensemble_eval: missing references for: " + ids);
  }

  std::vector<std::vector<int>> decoded(data.bundles.size());
  const int workers = std::max(1, jobs);
  if (workers == 1) {
    for (std::size_t i = 0; i < data.bundles.size(); ++i) {
      decoded[i] = beam_search(models, data.bundles[i], beam, max_len).best;
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= data.bundles.size()) return;
          decoded[i] = beam_search(models, data.bundles[i], beam, max_len).best;
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<metrics::Tokens> candidates;
  std::vector<std::vector<metrics::Tokens>> references;
  EvalOutput out;
  candidates.reserve(decoded.size());
  references.reserve(decoded.size());
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    candidates.push_back(data.vocab.decode(decoded[i]));
    std::vector<metrics::Tokens> refs;
    refs.reserve(data.records[i].references.size());
    for (const auto& r : data.records[i].references) refs.push_back(data.vocab.decode(r));
    references.push_back(std::move(refs));
    out.captions.emplace_back(data.records[i].video_id, candidates.back());
  }
  out.scores = metrics::score_all(candidates, references);
  return out;
}

}  // namespace capfuse
