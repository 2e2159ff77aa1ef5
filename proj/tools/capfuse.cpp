// capfuse command-line tool: synthetic data generation, vocab/attribute
// construction, staged training, ensemble evaluation and single-video
// captioning. Exit codes: 0 success, 2 config error, 3 data error,
// 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "capfuse/checkpoint.hpp"
#include "capfuse/config.hpp"
#include "capfuse/gradcheck.hpp"
#include "capfuse/inference.hpp"
#include "capfuse/mmfc.hpp"
#include "capfuse/semantic.hpp"
#include "capfuse/synthetic.hpp"
#include "capfuse/training.hpp"

namespace {

using namespace capfuse;

struct CommonOpts {
  std::string config_path;
  std::string profile = "desk";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Config file (key=value lines)");
  cmd->add_option("--profile", opts.profile, "Profile: desk or paper")->capture_default_str();
  cmd->add_option("--set", opts.overrides, "Override config keys (key=value, repeatable)");
}

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig c = profile_config(opts.profile);
  if (!opts.config_path.empty()) c = load_config_file(opts.config_path, std::move(c));
  for (const auto& kv : opts.overrides) apply_override(c, kv);
  apply_env_seed(c);
  return c;
}

std::string read_text_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string(what) + " file not found: '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
}

SyntheticSpec spec_from_config(const RunConfig& c, std::uint64_t seed, int n_videos) {
  SyntheticSpec s;
  s.seed = seed;
  s.n_videos = n_videos;
  s.n_frames = c.data.frames;
  s.modality_dims = c.data.modalities;
  s.vocab_size = c.data.vocab_size;
  s.min_caption_len = c.data.min_caption_len;
  s.max_caption_len = c.data.max_caption_len;
  s.noise_sigma = c.data.noise_sigma;
  return s;
}

Dataset load_dataset(const std::string& features_path, const std::string& captions_path,
                     const Vocab& vocab, int n_frames, int tokenizer_max_len) {
  Dataset d;
  d.vocab = vocab;
  for (const FeatureBundle& b : read_features(features_path)) {
    d.bundles.push_back(align_frames(b, n_frames));
  }
  const auto raw = read_captions_jsonl(captions_path);
  const auto records = encode_captions(raw, vocab, tokenizer_max_len);
  // Reorder records to bundle order.
  for (const auto& b : d.bundles) {
    bool found = false;
    for (const auto& r : records) {
      if (r.video_id == b.video_id) {
        d.records.push_back(r);
        found = true;
        break;
      }
    }
    if (!found) throw DataError("no captions for video '" + b.video_id + "'");
  }
  d.validate();
  return d;
}

std::vector<std::pair<std::string, int>> modalities_of(const FeatureBundle& bundle) {
  std::vector<std::pair<std::string, int>> mods;
  for (const auto& [name, m] : bundle.modalities) mods.emplace_back(name, m.cols);
  return mods;
}

std::string caption_text(const Vocab& vocab, const std::vector<int>& ids) {
  const auto tokens = vocab.decode(ids);
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) s += ' ';
    s += tokens[i];
  }
  return s;
}

int cmd_gen_data(const CommonOpts& common, const std::string& out_dir) {
  const RunConfig c = resolve_config(common);
  std::filesystem::create_directories(out_dir);

  const SyntheticData train = gen_synthetic(spec_from_config(c, c.seed, c.data.videos));
  const SyntheticData val =
      gen_synthetic(spec_from_config(c, Rng::mix(c.seed, "val"), c.data.val_videos));

  write_features(train.bundles, out_dir + "/train_features.mmfc");
  write_captions_jsonl(synthetic_raw_captions(train), out_dir + "/train_captions.jsonl");
  write_features(val.bundles, out_dir + "/val_features.mmfc");
  write_captions_jsonl(synthetic_raw_captions(val), out_dir + "/val_captions.jsonl");
  write_text_file(out_dir + "/vocab.txt", train.vocab.to_text());

  std::cout << "wrote " << train.bundles.size() << " train / " << val.bundles.size()
            << " val videos to " << out_dir << " (vocab " << train.vocab.size() << ")\n";
  return 0;
}

int cmd_build_vocab(const std::string& captions_path, const std::string& out_path, int min_count,
                    int tokenizer_max_len) {
  const auto raw = read_captions_jsonl(captions_path);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& r : raw) {
    for (const auto& cap : r.captions) corpus.push_back(tokenize(cap, tokenizer_max_len));
  }
  const Vocab vocab = build_vocab(corpus, min_count);
  write_text_file(out_path, vocab.to_text());
  std::cout << "vocab size " << vocab.size() << " (incl. 4 reserved) -> " << out_path << "\n";
  return 0;
}

int cmd_build_attrs(const std::string& captions_path, const std::string& out_path, int k,
                    const std::string& stopwords_path, int tokenizer_max_len) {
  const auto raw = read_captions_jsonl(captions_path);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& r : raw) {
    for (const auto& cap : r.captions) corpus.push_back(tokenize(cap, tokenizer_max_len));
  }
  std::set<std::string> stopwords = default_stopwords();
  if (!stopwords_path.empty()) {
    stopwords.clear();
    std::istringstream in(read_text_file(stopwords_path, "stopwords"));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) stopwords.insert(line);
    }
  }
  const AttributeVocab attrs = build_attribute_vocab(corpus, k, stopwords);
  write_text_file(out_path, attrs.to_text());
  std::cout << "attribute vocab of " << attrs.k() << " tokens -> " << out_path << "\n";
  return 0;
}

int cmd_train(const CommonOpts& common, const std::string& decoder_flag,
              const std::string& resume_path) {
  RunConfig c = resolve_config(common);
  if (!decoder_flag.empty()) apply_override(c, "model.decoder=" + decoder_flag);

  const Vocab vocab = Vocab::from_text(read_text_file(c.paths.vocab, "vocab"));
  const Dataset train = load_dataset(c.paths.features, c.paths.captions, vocab, c.data.frames,
                                     c.data.tokenizer_max_len);
  const Dataset val = load_dataset(c.paths.val_features, c.paths.val_captions, vocab,
                                   c.data.frames, c.data.tokenizer_max_len);

  ModelConfig mc;
  mc.decoder = c.model.decoder;
  mc.model_dim = c.model.dim;
  mc.attn_dim = c.model.attn_dim;
  mc.embed_relu = c.model.embed_relu;
  mc.vocab_size = vocab.size();
  mc.modalities = modalities_of(train.bundles.at(0));

  std::optional<Checkpoint> resume;
  std::optional<CaptionModel> model;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resume_path);
    if (resume->vocab_hash != vocab.content_hash()) {
      std::cerr << "warning: checkpoint vocab hash mismatch (checkpoint "
                << resume->vocab_hash << ", vocab file " << vocab.content_hash() << ")\n";
    }
    model.emplace(model_from_checkpoint(*resume));
  } else {
    model.emplace(mc, c.seed);
  }

  std::filesystem::create_directories(c.paths.checkpoint_dir);
  TrainOptions options;
  options.seed = c.seed;
  options.vocab_hash = vocab.content_hash();
  options.config_echo = serialize_config(c);
  options.ckpt_dir = c.paths.checkpoint_dir;
  options.log_path = c.paths.log.empty() ? c.paths.checkpoint_dir + "/train_log.jsonl" : c.paths.log;
  if (resume) options.resume = &*resume;

  const TrainResult result = run_stage_schedule(*model, train, val, c.train, options);
  const std::string final_path =
      c.paths.checkpoint_dir + "/final_" + model->config().decoder + ".ckpt";
  save_checkpoint(final_path, result.final);

  std::cout << "trained " << model->config().decoder << " through "
            << stage_name(result.final.stage) << "; best val CIDEr-D "
            << result.final.best_val_cider << "; checkpoint " << final_path << "\n";
  return 0;
}

std::vector<Checkpoint> load_checkpoints(const std::vector<std::string>& paths,
                                         const Vocab& vocab) {
  if (paths.empty()) throw ConfigError("at least one --checkpoints path is required");
  std::vector<Checkpoint> ckpts;
  for (const auto& p : paths) {
    ckpts.push_back(load_checkpoint(p));
    if (ckpts.back().vocab_hash != vocab.content_hash()) {
      std::cerr << "warning: vocab hash mismatch for checkpoint '" << p << "'\n";
    }
  }
  return ckpts;
}

int cmd_eval(const CommonOpts& common, const std::vector<std::string>& ckpt_paths,
             const std::string& report_path, const std::string& captions_out) {
  const RunConfig c = resolve_config(common);
  const Vocab vocab = Vocab::from_text(read_text_file(c.paths.vocab, "vocab"));
  const Dataset data = load_dataset(c.paths.features, c.paths.captions, vocab, c.data.frames,
                                    c.data.tokenizer_max_len);

  const auto ckpts = load_checkpoints(ckpt_paths, vocab);
  std::vector<CaptionModel> models;
  models.reserve(ckpts.size());
  for (const auto& k : ckpts) models.push_back(model_from_checkpoint(k));
  std::vector<const CaptionModel*> model_ptrs;
  for (const auto& m : models) model_ptrs.push_back(&m);

  const EvalOutput out =
      ensemble_eval(model_ptrs, data, c.decode.beam, c.decode.max_len, c.eval.jobs);

  nlohmann::ordered_json report;
  report["bleu4"] = out.scores.bleu4;
  report["rouge_l"] = out.scores.rouge_l;
  report["cider_d"] = out.scores.cider_d;
  report["meteor_exact"] = out.scores.meteor_exact;
  const std::string text = report.dump(2);
  std::cout << text << "\n";
  if (!report_path.empty()) write_text_file(report_path, text + "\n");

  if (!captions_out.empty()) {
    std::ofstream os(captions_out, std::ios::binary);
    if (!os) throw DataError("cannot open '" + captions_out + "' for writing");
    for (const auto& [id, tokens] : out.captions) {
      nlohmann::ordered_json j;
      j["video_id"] = id;
      std::string s;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) s += ' ';
        s += tokens[i];
      }
      j["caption"] = s;
      os << j.dump() << "\n";
    }
  }
  return 0;
}

int cmd_caption(const CommonOpts& common, const std::vector<std::string>& ckpt_paths,
                const std::string& video_id) {
  const RunConfig c = resolve_config(common);
  const Vocab vocab = Vocab::from_text(read_text_file(c.paths.vocab, "vocab"));
  const auto ckpts = load_checkpoints(ckpt_paths, vocab);
  std::vector<CaptionModel> models;
  models.reserve(ckpts.size());
  for (const auto& k : ckpts) models.push_back(model_from_checkpoint(k));
  std::vector<const CaptionModel*> model_ptrs;
  for (const auto& m : models) model_ptrs.push_back(&m);

  const FeatureBundle* found = nullptr;
  std::vector<FeatureBundle> bundles = read_features(c.paths.features);
  for (const auto& b : bundles) {
    if (b.video_id == video_id) {
      found = &b;
      break;
    }
  }
  if (found == nullptr) {
    throw DataError("video '" + video_id + "' not found in '" + c.paths.features + "'");
  }
  const FeatureBundle aligned = align_frames(*found, c.data.frames);
  const BeamResult r =
      beam_search(model_ptrs, aligned, c.decode.beam, c.decode.max_len, c.decode.length_alpha);

  nlohmann::ordered_json j;
  j["video_id"] = video_id;
  j["caption"] = caption_text(vocab, r.best);
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_gradcheck() {
  const auto reports = gradcheck_suite(/*seeds_per_case=*/10, /*tolerance=*/1e-3);
  std::string current;
  double worst = 0.0;
  bool all_pass = true;
  int fails = 0;
  for (const auto& r : reports) {
    if (r.name != current) {
      if (!current.empty()) {
        std::printf("%-24s max rel err %.3e  %s\n", current.c_str(), worst,
                    fails == 0 ? "ok" : "FAIL");
      }
      current = r.name;
      worst = 0.0;
      fails = 0;
    }
    worst = std::max(worst, r.max_rel_err);
    if (!r.pass) {
      ++fails;
      all_pass = false;
    }
  }
  if (!current.empty()) {
    std::printf("%-24s max rel err %.3e  %s\n", current.c_str(), worst,
                fails == 0 ? "ok" : "FAIL");
  }
  if (!all_pass) {
    std::cerr << "gradcheck failed\n";
    return 4;
  }
  std::cout << "all gradient checks passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capfuse: multi-modal feature-attention video captioning"};
  app.require_subcommand(1);

  CommonOpts gen_common, train_common, eval_common, caption_common;
  std::string out_dir = "data";
  auto* gen = app.add_subcommand("gen-data", "Generate a deterministic synthetic dataset");
  add_common(gen, gen_common);
  gen->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  std::string bv_captions, bv_out = "vocab.txt";
  int bv_min_count = 5, bv_max_len = 30;
  auto* bv = app.add_subcommand("build-vocab", "Build a vocabulary from a captions file");
  bv->add_option("--captions", bv_captions, "Captions JSON-lines file")->required();
  bv->add_option("--out", bv_out, "Output vocab path")->capture_default_str();
  bv->add_option("--min-count", bv_min_count, "Minimum token frequency")->capture_default_str();
  bv->add_option("--max-len", bv_max_len, "Tokenizer clip length")->capture_default_str();

  std::string ba_captions, ba_out = "attrs.txt", ba_stopwords;
  int ba_k = 300, ba_max_len = 30;
  auto* ba = app.add_subcommand("build-attrs", "Build the attribute vocabulary");
  ba->add_option("--captions", ba_captions, "Captions JSON-lines file")->required();
  ba->add_option("--out", ba_out, "Output attribute vocab path")->capture_default_str();
  ba->add_option("--k", ba_k, "Number of attributes")->capture_default_str();
  ba->add_option("--stopwords", ba_stopwords, "Stopword list file (one token per line)");
  ba->add_option("--max-len", ba_max_len, "Tokenizer clip length")->capture_default_str();

  std::string train_decoder, train_resume;
  auto* tr = app.add_subcommand("train", "Run the three-stage training schedule");
  add_common(tr, train_common);
  tr->add_option("--decoder", train_decoder, "Decoder: topdown or xlan");
  tr->add_option("--resume", train_resume, "Resume from a checkpoint");

  std::vector<std::string> eval_ckpts;
  std::string eval_report, eval_captions_out;
  int eval_jobs = 0, eval_beam = 0;
  auto* ev = app.add_subcommand("eval", "Evaluate an ensemble of checkpoints");
  add_common(ev, eval_common);
  ev->add_option("--checkpoints", eval_ckpts, "Checkpoint paths (>= 1, ensembled)")->required();
  ev->add_option("--out", eval_report, "Write the JSON metric report here");
  ev->add_option("--captions-out", eval_captions_out, "Write per-video captions (JSON-lines)");
  ev->add_option("--jobs", eval_jobs, "Parallel decode workers (overrides eval.jobs)");
  ev->add_option("--beam", eval_beam, "Beam width (overrides decode.beam)");

  std::vector<std::string> cap_ckpts;
  std::string cap_video;
  int cap_beam = 0;
  auto* cap = app.add_subcommand("caption", "Caption one video id");
  add_common(cap, caption_common);
  cap->add_option("--checkpoints", cap_ckpts, "Checkpoint paths (>= 1, ensembled)")->required();
  cap->add_option("--video", cap_video, "Video id to caption")->required();
  cap->add_option("--beam", cap_beam, "Beam width (overrides decode.beam)");

  app.add_subcommand("gradcheck", "Run the finite-difference gradient check suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_common, out_dir);
    if (bv->parsed()) return cmd_build_vocab(bv_captions, bv_out, bv_min_count, bv_max_len);
    if (ba->parsed()) return cmd_build_attrs(ba_captions, ba_out, ba_k, ba_stopwords, ba_max_len);
    if (tr->parsed()) return cmd_train(train_common, train_decoder, train_resume);
    if (ev->parsed()) {
      if (eval_jobs > 0) eval_common.overrides.push_back("eval.jobs=" + std::to_string(eval_jobs));
      if (eval_beam > 0) eval_common.overrides.push_back("decode.beam=" + std::to_string(eval_beam));
      return cmd_eval(eval_common, eval_ckpts, eval_report, eval_captions_out);
    }
    if (cap->parsed()) {
      if (cap_beam > 0) {
        caption_common.overrides.push_back("decode.beam=" + std::to_string(cap_beam));
      }
      return cmd_caption(caption_common, cap_ckpts, cap_video);
    }
    return cmd_gradcheck();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const ShapeError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
