#include "capfuse/synthetic.hpp"

#include <cstdio>

#include "capfuse/rng.hpp"

namespace capfuse {

namespace {

std::string word_for(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%03d", id);
  return buf;
}

}  // namespace

Matrix synthetic_projection(std::uint64_t seed, const std::string& modality, int dim,
                            int vocab_size) {
  Rng rng(Rng::mix(Rng::mix(seed, "projection"), modality));
  Matrix p(vocab_size, dim);
  for (float& x : p.data) x = static_cast<float>(rng.gaussian());
  return p;
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  if (spec.vocab_size < 8) throw DataError("gen_synthetic: vocab_size must be >= 8");
  if (spec.min_caption_len < 1 || spec.max_caption_len < spec.min_caption_len) {
    throw DataError("gen_synthetic: invalid caption length range");
  }

  SyntheticData data;
  std::vector<std::string> words;
  for (int id = Vocab::kNumReserved; id < spec.vocab_size; ++id) words.push_back(word_for(id));
  data.vocab = Vocab::from_tokens(words);

  std::vector<Matrix> projections;
  projections.reserve(spec.modality_dims.size());
  for (const auto& [name, dim] : spec.modality_dims) {
    projections.push_back(synthetic_projection(spec.seed, name, dim, spec.vocab_size));
  }

  for (int v = 0; v < spec.n_videos; ++v) {
    Rng rng(Rng::mix(Rng::mix(spec.seed, "video"), static_cast<std::uint64_t>(v)));
    const int len =
        spec.min_caption_len + rng.uniform_int(spec.max_caption_len - spec.min_caption_len + 1);
    std::vector<int> latent(static_cast<std::size_t>(len));
    for (int& t : latent) {
      t = Vocab::kNumReserved + rng.uniform_int(spec.vocab_size - Vocab::kNumReserved);
    }

    FeatureBundle bundle;
    bundle.video_id = "vid" + std::to_string(v);
    for (std::size_t mi = 0; mi < spec.modality_dims.size(); ++mi) {
      const auto& [name, dim] = spec.modality_dims[mi];
      const Matrix& proj = projections[mi];
      Matrix m(spec.n_frames, dim);
      for (int j = 0; j < spec.n_frames; ++j) {
        // Frame j shows the token at position floor(j * len / n_frames).
        const int pos = static_cast<int>(static_cast<std::int64_t>(j) * len / spec.n_frames);
        const int tok = latent[static_cast<std::size_t>(pos)];
        for (int c = 0; c < dim; ++c) {
          m.at(j, c) = proj.at(tok, c) +
                       static_cast<float>(spec.noise_sigma * rng.gaussian());
        }
      }
      bundle.modalities.emplace_back(name, std::move(m));
    }
    data.bundles.push_back(std::move(bundle));

    CaptionRecord rec;
    rec.video_id = "vid" + std::to_string(v);
    auto with_eos = latent;
    with_eos.push_back(Vocab::kEos);
    rec.references.push_back(std::move(with_eos));
    for (int p = 0; p < spec.n_paraphrases; ++p) {
      std::vector<int> para;
      for (const int t : latent) {
        if (rng.uniform() >= spec.paraphrase_dropout) para.push_back(t);
      }
      if (para.empty()) para.push_back(latent.front());
      para.push_back(Vocab::kEos);
      rec.references.push_back(std::move(para));
    }
    data.captions.push_back(std::move(rec));
  }
  return data;
}

std::vector<RawCaptions> synthetic_raw_captions(const SyntheticData& data) {
  std::vector<RawCaptions> raw;
  raw.reserve(data.captions.size());
  for (const auto& rec : data.captions) {
    RawCaptions r;
    r.video_id = rec.video_id;
    for (const auto& ref : rec.references) {
      const auto tokens = data.vocab.decode(ref);
      std::string s;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) s += ' ';
        s += tokens[i];
      }
      r.captions.push_back(std::move(s));
    }
    raw.push_back(std::move(r));
  }
  return raw;
}

}  // namespace capfuse
