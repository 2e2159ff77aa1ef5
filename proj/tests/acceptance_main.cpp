// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code 0 iff all pass.
//
// Usage: acceptance_tests [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "capfuse/checkpoint.hpp"
#include "capfuse/gradcheck.hpp"
#include "capfuse/inference.hpp"
#include "capfuse/mmfc.hpp"
#include "capfuse/ops.hpp"
#include "capfuse/synthetic.hpp"
#include "capfuse/training.hpp"

#include "oracles.hpp"

namespace {

using namespace capfuse;
namespace fs = std::filesystem;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------- helpers --

SyntheticSpec desk_spec(std::uint64_t seed, int n_videos) {
  SyntheticSpec spec;  // defaults are the desk profile
  spec.seed = seed;
  spec.n_videos = n_videos;
  return spec;
}

Dataset to_dataset(const SyntheticData& d) {
  Dataset out;
  out.bundles = d.bundles;
  out.records = d.captions;
  out.vocab = d.vocab;
  return out;
}

ModelConfig desk_model(const std::string& decoder, const SyntheticData& d) {
  ModelConfig mc;
  mc.decoder = decoder;
  mc.model_dim = 64;
  mc.vocab_size = d.vocab.size();
  for (const auto& [name, m] : d.bundles.at(0).modalities) mc.modalities.emplace_back(name, m.cols);
  return mc;
}

std::vector<int> strip_eos(std::vector<int> ids) {
  if (!ids.empty() && ids.back() == Vocab::kEos) ids.pop_back();
  return ids;
}

// Fraction of videos whose greedy caption equals one of its references.
double exact_match_rate(const CaptionModel& model, const Dataset& data) {
  int hits = 0;
  for (std::size_t i = 0; i < data.bundles.size(); ++i) {
    const auto decoded = greedy_decode({&model}, data.bundles[i], 16);
    for (const auto& ref : data.records[i].references) {
      if (decoded == strip_eos(ref)) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(data.bundles.size());
}

std::string temp_file(const std::string& name) {
  return (fs::temp_directory_path() / ("capfuse_accept_" + name)).string();
}

// ------------------------------------------------------------- criterion 1 --

bool run_gradient_integrity(std::string& detail) {
  const auto start = Clock::now();
  const auto reports = gradcheck_suite(/*seeds_per_case=*/10, /*tolerance=*/1e-3);
  double worst = 0.0;
  std::string worst_name;
  bool all = true;
  for (const auto& r : reports) {
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_name = r.name;
    }
    all = all && r.pass;
  }
  const double elapsed = seconds_since(start);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu checks, worst %.2e (%s), %.1fs", reports.size(), worst,
                worst_name.c_str(), elapsed);
  detail = buf;
  return all && elapsed < 120.0;
}

// ------------------------------------------------------------- criterion 2 --

bool run_fusion_oracle_equivalence(std::string& detail) {
  Rng rng(20260809);
  double worst = 0.0;
  double worst_sum_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + rng.uniform_int(5);
    const int frames = 1 + rng.uniform_int(8);
    const int d = 2 + rng.uniform_int(15);
    const int a = 2 + rng.uniform_int(10);
    const int h_dim = 2 + rng.uniform_int(10);

    const auto rand_tensor = [&rng](Shape shape) {
      std::vector<float> v(shape_numel(shape));
      for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
      return Tensor::leaf(std::move(shape), std::move(v), true);
    };

    FusionParams f;
    f.embed_relu = false;
    std::vector<Tensor> v;
    std::vector<oracles::Mat> ov, owv;
    for (int i = 0; i < n; ++i) {
      f.modality_names.push_back("m" + std::to_string(i));
      f.attn_v.push_back(rand_tensor({d, a}));
      v.push_back(rand_tensor({frames, d}));
    }
    f.attn_h = rand_tensor({h_dim, a});
    f.attn_out = rand_tensor({a, n});
    const Tensor h = rand_tensor({h_dim});

    Tape tape;
    const FusedStep got = feature_attention(tape, h, v, f);

    const auto to_mat = [](const Tensor& t) {
      oracles::Mat m(static_cast<std::size_t>(t.dim(0)),
                     oracles::Vec(static_cast<std::size_t>(t.dim(1))));
      for (int r = 0; r < t.dim(0); ++r)
        for (int c = 0; c < t.dim(1); ++c)
          m[r][c] = t.at(static_cast<std::size_t>(r) * t.dim(1) + c);
      return m;
    };
    for (const Tensor& vi : v) ov.push_back(to_mat(vi));
    for (const Tensor& wv : f.attn_v) owv.push_back(to_mat(wv));
    const auto want = oracles::feature_attention(
        oracles::Vec(h.values().begin(), h.values().end()), ov, owv, to_mat(f.attn_h),
        to_mat(f.attn_out));

    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(got.weights.at(static_cast<std::size_t>(i)) -
                                       want.weights[static_cast<std::size_t>(i)]));
      sum += got.weights.at(static_cast<std::size_t>(i));
    }
    worst_sum_err = std::max(worst_sum_err, std::abs(sum - 1.0));
    for (int j = 0; j < frames; ++j) {
      for (int c = 0; c < d; ++c) {
        worst = std::max(worst, std::abs(got.fused.at(static_cast<std::size_t>(j) * d + c) -
                                         want.fused[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)]));
      }
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "50 cases, worst |diff| %.2e, worst weight-sum err %.2e", worst,
                worst_sum_err);
  detail = buf;
  return worst < 1e-5 && worst_sum_err < 1e-6;
}

// ------------------------------------------------------------- criterion 3 --

bool overfit_one(const std::string& decoder, std::uint64_t train_seed, const Dataset& train,
                 double* final_match) {
  CaptionModel model(desk_model(decoder, {train.bundles, train.records, train.vocab}), train_seed);
  StageSchedule schedule;  // stage 1 semantics: lr 5e-4, teacher forcing
  schedule.batch_size = 16;

  double match = 0.0;
  TrainOptions options;
  options.seed = train_seed;
  options.stop_after = TrainingStage::kCrossEntropy;
  options.xe_epochs_override = 300;
  options.val_metric = [](const CaptionModel&) { return 0.0; };
  options.epoch_callback = [&](const CaptionModel& m, TrainingStage, int epoch) {
    if (epoch >= 40 && epoch % 10 == 0) {
      match = exact_match_rate(m, train);
      if (match >= 0.9) return false;  // success observed; stop early
    }
    return true;
  };
  run_stage_schedule(model, train, train, schedule, options);
  if (match < 0.9) match = exact_match_rate(model, train);
  *final_match = match;
  return match >= 0.9;
}

bool run_overfit_witness(std::string& detail) {
  const SyntheticData data = gen_synthetic(desk_spec(42, 32));
  const Dataset train = to_dataset(data);
  detail.clear();
  bool all_ok = true;
  for (const std::string decoder : {"topdown", "xlan"}) {
    const auto start = Clock::now();
    int passes = 0, runs = 0;
    std::string rates;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      double match = 0.0;
      ++runs;
      if (overfit_one(decoder, seed, train, &match)) ++passes;
      char r[32];
      std::snprintf(r, sizeof(r), "%s%.0f%%", rates.empty() ? "" : "/", match * 100.0);
      rates += r;
      if (passes >= 4) break;  // criterion met with seeds to spare
    }
    const double elapsed = seconds_since(start);
    const bool ok = passes >= 4 && elapsed < 900.0;
    all_ok = all_ok && ok;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s%s %d/%d seeds >=90%% (%s) in %.0fs",
                  detail.empty() ? "" : "; ", decoder.c_str(), passes, runs, rates.c_str(),
                  elapsed);
    detail += buf;
  }
  return all_ok;
}

// ------------------------------------------------------------- criterion 4 --

bool run_stage_schedule_witness(std::string& detail) {
  const SyntheticData tdata = gen_synthetic(desk_spec(7, 4));
  const SyntheticData vdata = gen_synthetic(desk_spec(8, 4));
  ModelConfig mc = desk_model("topdown", tdata);
  mc.model_dim = 16;
  CaptionModel model(mc, 3);

  StageSchedule schedule;  // spec defaults: 5 xe epochs, patience 2
  schedule.batch_size = 8;
  schedule.max_epochs = 40;

  const std::string log_path = temp_file("schedule_log.jsonl");
  TrainOptions options;
  options.seed = 3;
  options.log_path = log_path;
  options.val_metric = [](const CaptionModel&) { return 0.5; };  // constant mock

  run_stage_schedule(model, to_dataset(tdata), to_dataset(vdata), schedule, options);

  // Machine-check the JSON log.
  std::ifstream in(log_path);
  std::string line;
  int xe = 0, oracle = 0;
  bool lr_ok = true;
  bool saw_sc1 = false, saw_sc2 = false, transition_ok = true;
  std::string prev_stage;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const std::string stage = j["stage"];
    const double lr = j["lr"];
    if (stage == "cross_entropy") {
      ++xe;
      lr_ok = lr_ok && std::abs(lr - 5e-4) < 1e-12;
    } else if (stage == "word_oracle") {
      ++oracle;
      lr_ok = lr_ok && std::abs(lr - 5e-5) < 1e-12;
    } else if (stage == "self_critical_1") {
      saw_sc1 = true;
      lr_ok = lr_ok && std::abs(lr - 5e-5) < 1e-12;
      transition_ok = transition_ok && !saw_sc2;  // phase 1 precedes phase 2
    } else if (stage == "self_critical_2") {
      saw_sc2 = true;
      lr_ok = lr_ok && std::abs(lr - 5e-6) < 1e-12;
    }
    prev_stage = stage;
  }
  fs::remove(log_path);

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "xe epochs %d (want 5), oracle epochs %d (want 2), sc 5e-5->5e-6 %s, lrs %s", xe,
                oracle, (saw_sc1 && saw_sc2 && transition_ok) ? "seen" : "MISSING",
                lr_ok ? "exact" : "WRONG");
  detail = buf;
  return xe == 5 && oracle == 2 && saw_sc1 && saw_sc2 && transition_ok && lr_ok;
}

// ------------------------------------------------------------- criterion 5 --

bool run_scst_improvement(std::string& detail) {
  const auto start = Clock::now();
  const SyntheticData tdata = gen_synthetic(desk_spec(42, 32));
  const SyntheticData hdata = gen_synthetic(desk_spec(Rng::mix(42, "val"), 16));
  const Dataset train = to_dataset(tdata);
  const Dataset heldout = to_dataset(hdata);

  // Stage 1+2 pretraining shared by all seeds. Stage 1 is extended at desk
  // scale (same adaptation the overfit witness uses) so stage 2 hands over a
  // usable captioner rather than a 5-epoch stub.
  CaptionModel pretrained(desk_model("topdown", tdata), 42);
  StageSchedule schedule;
  schedule.batch_size = 16;
  schedule.max_epochs = 30;
  {
    TrainOptions options;
    options.seed = 42;
    options.stop_after = TrainingStage::kWordOracle;
    options.xe_epochs_override = 40;
    run_stage_schedule(pretrained, train, heldout, schedule, options);
  }
  AdamState fresh_adam;
  const Checkpoint stage2 = make_checkpoint(pretrained, fresh_adam,
                                            TrainingStage::kSelfCritical1, 0, 0.0, 0, "");

  std::vector<std::vector<std::vector<int>>> heldout_refs;
  for (const auto& r : heldout.records) heldout_refs.push_back(r.references);
  const RewardFn reward = make_reward_fn(heldout.vocab, heldout_refs);
  const double start_reward = mean_reward(pretrained, heldout, reward, 16);

  int floor_ok = 0, improved = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CaptionModel model = model_from_checkpoint(stage2);
    StageSchedule sc = schedule;
    sc.batch_size = 8;  // more optimizer steps per plateau window
    sc.max_epochs = 10;
    TrainOptions options;
    options.seed = seed;
    options.resume = &stage2;  // stages 1-2 recorded as done
    run_stage_schedule(model, train, heldout, sc, options);
    const double end_reward = mean_reward(model, heldout, reward, 16);
    if (end_reward >= start_reward - 1e-6) ++floor_ok;
    if (end_reward > start_reward) ++improved;
    char r[48];
    std::snprintf(r, sizeof(r), "%s%+.4f", per_seed.empty() ? "" : "/", end_reward - start_reward);
    per_seed += r;
  }
  const double elapsed = seconds_since(start);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "start reward %.4f; deltas %s; floor %d/5, improved %d/5, %.0fs", start_reward,
                per_seed.c_str(), floor_ok, improved, elapsed);
  detail = buf;
  return floor_ok == 5 && improved >= 3 && elapsed < 900.0;
}

// ------------------------------------------------------------- criterion 6 --

bool run_metric_oracles(std::string& detail) {
  Rng rng(606060);
  double worst_bleu = 0.0, worst_other = 0.0;
  for (int corpus = 0; corpus < 100; ++corpus) {
    const int n = 3 + rng.uniform_int(6);
    std::vector<metrics::Tokens> cands;
    std::vector<std::vector<metrics::Tokens>> refs;
    const auto sentence = [&rng]() {
      metrics::Tokens t;
      const int len = 1 + rng.uniform_int(8);
      for (int i = 0; i < len; ++i) t.push_back("w" + std::to_string(rng.uniform_int(10)));
      return t;
    };
    for (int i = 0; i < n; ++i) {
      cands.push_back(sentence());
      std::vector<metrics::Tokens> rs;
      const int n_refs = 1 + rng.uniform_int(3);
      for (int r = 0; r < n_refs; ++r) rs.push_back(sentence());
      refs.push_back(std::move(rs));
    }

    worst_bleu = std::max(worst_bleu,
                          std::abs(metrics::bleu4(cands, refs) - oracles::bleu4(cands, refs)));
    std::vector<double> oracle_sent;
    const double oc = oracles::cider_d(cands, refs, &oracle_sent);
    const auto got = metrics::cider_d(cands, refs);
    worst_other = std::max(worst_other, std::abs(got.corpus_mean - oc));
    for (std::size_t i = 0; i < cands.size(); ++i) {
      worst_other = std::max(worst_other, std::abs(got.per_sentence[i] - oracle_sent[i]));
      worst_other = std::max(worst_other, std::abs(metrics::rouge_l(cands[i], refs[i]) -
                                                   oracles::rouge_l(cands[i], refs[i])));
      worst_other = std::max(worst_other, std::abs(metrics::meteor_exact(cands[i], refs[i]) -
                                                   oracles::meteor_exact(cands[i], refs[i])));
    }
  }

  // Identity corpus: distinct references, no universally shared n-gram.
  std::vector<metrics::Tokens> icands;
  std::vector<std::vector<metrics::Tokens>> irefs;
  for (int i = 0; i < 8; ++i) {
    metrics::Tokens t;
    for (int k = 0; k < 5; ++k) t.push_back("v" + std::to_string(i) + "w" + std::to_string(k));
    icands.push_back(t);
    irefs.push_back({t});
  }
  const double ibleu = metrics::bleu4(icands, irefs);
  const double irouge = metrics::rouge_l_corpus(icands, irefs);
  const auto icider = metrics::cider_d(icands, irefs);
  bool identity_ok = std::abs(ibleu - 1.0) < 1e-12 && std::abs(irouge - 1.0) < 1e-12;
  for (const double s : icider.per_sentence) identity_ok = identity_ok && std::abs(s - 10.0) < 1e-9;

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "100 corpora: bleu err %.1e (<1e-9), others %.1e (<1e-6); identity %s", worst_bleu,
                worst_other, identity_ok ? "exact" : "WRONG");
  detail = buf;
  return worst_bleu < 1e-9 && worst_other < 1e-6 && identity_ok;
}

// ------------------------------------------------------------- criterion 7 --

struct Enumerated {
  std::vector<int> ids;
  double logp = -std::numeric_limits<double>::infinity();
};

void enumerate_rec(const CaptionModel& model, Tape& tape, const std::vector<Tensor>& v,
                   const DecoderState& state, std::vector<int>& prefix, double logp, int max_len,
                   Enumerated& best) {
  if (static_cast<int>(prefix.size()) == max_len) {
    if (logp > best.logp || (logp == best.logp && prefix < best.ids)) {
      best.logp = logp;
      best.ids = prefix;
    }
    return;
  }
  DecoderState next = state;
  const int prev = prefix.empty() ? Vocab::kBos : prefix.back();
  const StepResult r = model.step(tape, next, prev, v);
  const Tensor probs = softmax(tape, r.logits, 0);
  for (int tok = 0; tok < probs.dim(0); ++tok) {
    const double lp = logp + std::log(static_cast<double>(probs.at(static_cast<std::size_t>(tok))));
    if (tok == Vocab::kEos) {
      if (lp > best.logp || (lp == best.logp && prefix < best.ids)) {
        best.logp = lp;
        best.ids = prefix;
      }
    } else {
      prefix.push_back(tok);
      enumerate_rec(model, tape, v, next, prefix, lp, max_len, best);
      prefix.pop_back();
    }
  }
}

bool run_decoding_laws(std::string& detail) {
  int beam_greedy_checked = 0;
  bool ok = true;

  // beam = 1 vs greedy over 20 random checkpoint/video combinations.
  std::uint64_t seed = 1;
  while (beam_greedy_checked < 20) {
    const std::string decoder = (seed % 2 == 0) ? "xlan" : "topdown";
    const SyntheticData d = gen_synthetic(desk_spec(seed, 2));
    ModelConfig mc = desk_model(decoder, d);
    mc.model_dim = 16;
    const CaptionModel model(mc, seed * 101);
    for (const auto& bundle : d.bundles) {
      const auto greedy = greedy_decode({&model}, bundle, 16);
      const auto beam = beam_search({&model}, bundle, 1, 16);
      ok = ok && greedy == beam.best;
      ++beam_greedy_checked;
    }
    ++seed;
  }

  // k-fold ensemble of one checkpoint behaves like the single model.
  {
    const SyntheticData d = gen_synthetic(desk_spec(77, 3));
    ModelConfig mc = desk_model("topdown", d);
    mc.model_dim = 16;
    const CaptionModel model(mc, 5);
    for (const auto& bundle : d.bundles) {
      const auto one = greedy_decode({&model}, bundle, 16);
      const auto four = greedy_decode({&model, &model, &model, &model}, bundle, 16);
      ok = ok && one == four;
      const auto b1 = beam_search({&model}, bundle, 3, 16);
      const auto b4 = beam_search({&model, &model, &model, &model}, bundle, 3, 16);
      ok = ok && b1.best == b4.best;
    }
  }

  // Exhaustive beam against brute-force enumeration (vocab 8, length 2).
  bool brute_ok = true;
  for (const std::string decoder : {"topdown", "xlan"}) {
    for (std::uint64_t s = 21; s <= 23; ++s) {
      const SyntheticData d = gen_synthetic(desk_spec(s, 1));
      ModelConfig mc = desk_model(decoder, d);
      mc.model_dim = 8;
      mc.vocab_size = 8;
      const CaptionModel model(mc, s);
      Tape tape;
      const auto v = model.embed(tape, d.bundles[0]);
      Enumerated brute;
      std::vector<int> prefix;
      enumerate_rec(model, tape, v, model.initial_state(), prefix, 0.0, 2, brute);
      const BeamResult beam = beam_search({&model}, d.bundles[0], 8, 2);
      brute_ok = brute_ok && beam.best == brute.ids &&
                 std::abs(beam.finished.front().log_prob - brute.logp) < 1e-6;
    }
  }

  char buf[120];
  std::snprintf(buf, sizeof(buf), "beam1==greedy on %d combos %s; k-fold %s; exhaustive %s",
                beam_greedy_checked, ok ? "ok" : "FAIL", ok ? "ok" : "FAIL",
                brute_ok ? "ok" : "FAIL");
  detail = buf;
  return ok && brute_ok;
}

// ------------------------------------------------------------- criterion 8 --

bool run_format_round_trips(std::string& detail) {
  bool ok = true;
  std::string notes;

  // MMFC byte-exact round trip.
  {
    const SyntheticData d = gen_synthetic(desk_spec(99, 4));
    const auto bytes = encode_features(d.bundles);
    const auto back = decode_features(bytes);
    const auto again = encode_features(back);
    ok = ok && bytes == again;
    notes += ok ? "mmfc roundtrip ok" : "mmfc roundtrip FAIL";

    auto corrupted = bytes;
    corrupted[0] = 'Z';
    bool caught = false;
    std::size_t offset = 1;
    try {
      decode_features(corrupted);
    } catch (const FormatError& e) {
      caught = true;
      offset = e.offset();
    }
    ok = ok && caught && offset == 0;
    notes += caught ? ", magic detected" : ", magic MISSED";
  }

  // Checkpoint byte-exact round trip + CRC detection.
  {
    const SyntheticData d = gen_synthetic(desk_spec(98, 2));
    ModelConfig mc = desk_model("xlan", d);
    mc.model_dim = 16;
    const CaptionModel model(mc, 8);
    AdamState adam;
    adam.t = 3;
    adam.lr = 5e-5;
    const Checkpoint ckpt = make_checkpoint(model, adam, TrainingStage::kWordOracle, 4, 0.1,
                                            d.vocab.content_hash(), "echo");
    const auto bytes = encode_checkpoint(ckpt);
    const Checkpoint back = decode_checkpoint(bytes);
    const auto again = encode_checkpoint(back);
    ok = ok && bytes == again;
    notes += bytes == again ? ", ckpt roundtrip ok" : ", ckpt roundtrip FAIL";

    auto corrupted = bytes;
    corrupted[bytes.size() / 3] ^= 0x40;
    bool caught = false;
    try {
      decode_checkpoint(corrupted);
    } catch (const FormatError&) {
      caught = true;
    }
    ok = ok && caught;
    notes += caught ? ", crc detected" : ", crc MISSED";
  }

  detail = notes;
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    bool (*run)(std::string&);
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient-integrity", run_gradient_integrity},
      {2, "fusion-oracle-equivalence", run_fusion_oracle_equivalence},
      {3, "overfit-witness", run_overfit_witness},
      {4, "stage-schedule-witness", run_stage_schedule_witness},
      {5, "scst-improvement", run_scst_improvement},
      {6, "metric-oracles", run_metric_oracles},
      {7, "decoding-laws", run_decoding_laws},
      {8, "format-round-trips", run_format_round_trips},
  };

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  bool all_pass = true;
  for (const auto& c : criteria) {
    if (!selected.empty() && selected.count(c.id) == 0) continue;
    const auto start = Clock::now();
    std::string detail;
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%d] %-28s %s  (%.1fs) %s\n", c.id, c.name, pass ? "PASS" : "FAIL",
                seconds_since(start), detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && pass;
  }
  return all_pass ? 0 : 1;
}
