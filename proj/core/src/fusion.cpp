#include "capfuse/fusion.hpp"

namespace capfuse {

FusionParams FusionParams::init(ParamStore& store, const std::string& prefix,
                                const std::vector<std::pair<std::string, int>>& modality_dims,
                                int model_dim, int attn_dim, int h_dim, bool embed_relu, Rng& rng) {
  FusionParams p;
  p.embed_relu = embed_relu;
  const int n = static_cast<int>(modality_dims.size());
  for (const auto& [name, dim] : modality_dims) {
    p.modality_names.push_back(name);
    p.embed_w.push_back(store.add(prefix + ".embed." + name + ".W", xavier_uniform(dim, model_dim, rng)));
    p.embed_b.push_back(store.add(prefix + ".embed." + name + ".b", zeros_param(model_dim)));
    p.attn_v.push_back(store.add(prefix + ".attn.Wv." + name, xavier_uniform(model_dim, attn_dim, rng)));
  }
  p.attn_h = store.add(prefix + ".attn.Wh", xavier_uniform(h_dim, attn_dim, rng));
  p.attn_out = store.add(prefix + ".attn.Wa", xavier_uniform(attn_dim, n, rng));
  return p;
}

FusionParams FusionParams::bind(ParamStore& store, const std::string& prefix,
                                const std::vector<std::pair<std::string, int>>& modality_dims,
                                bool embed_relu) {
  FusionParams p;
  p.embed_relu = embed_relu;
  for (const auto& [name, dim] : modality_dims) {
    p.modality_names.push_back(name);
    p.embed_w.push_back(store.at(prefix + ".embed." + name + ".W"));
    p.embed_b.push_back(store.at(prefix + ".embed." + name + ".b"));
    p.attn_v.push_back(store.at(prefix + ".attn.Wv." + name));
  }
  p.attn_h = store.at(prefix + ".attn.Wh");
  p.attn_out = store.at(prefix + ".attn.Wa");
  return p;
}

std::vector<Tensor> embed_modalities(Tape& tape, const FeatureBundle& bundle,
                                     const FusionParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.modality_names.size());
  for (std::size_t i = 0; i < params.modality_names.size(); ++i) {
    const Matrix* m = bundle.find(params.modality_names[i]);
    if (m == nullptr) {
      throw DataError("embed_modalities: video '" + bundle.video_id + "' has no modality '" +
                      params.modality_names[i] + "'");
    }
    Tensor x = Tensor::leaf({m->rows, m->cols}, m->data, false);
    Tensor v = add(tape, matmul(tape, x, params.embed_w[i]), params.embed_b[i]);
    if (params.embed_relu) v = relu(tape, v);
    out.push_back(std::move(v));
  }
  return out;
}

FusedStep feature_attention(Tape& tape, const Tensor& h_prev, const std::vector<Tensor>& v,
                            const FusionParams& params) {
  const int n = params.n_modalities();
  if (n < 1 || static_cast<int>(v.size()) != n) {
    throw ShapeError("feature_attention: expected " + std::to_string(n) + " modalities, got " +
                     std::to_string(v.size()));
  }
  const int frames = v[0].dim(0);
  const int d = v[0].dim(1);
  for (const Tensor& vi : v) {
    if (vi.rank() != 2 || vi.dim(0) != frames || vi.dim(1) != d) {
      throw ShapeError("feature_attention: modality shape " + shape_to_string(vi.shape()) +
                       " does not match " + shape_to_string(v[0].shape()));
    }
  }

  // Pre-activation per frame: rows are frames, columns the attention width.
  // The query term broadcasts across frames (the 1^T outer product).
  Tensor query = matmul(tape, h_prev, params.attn_h);  // (a)
  Tensor pre;
  for (int i = 0; i < n; ++i) {
    Tensor vi_proj = matmul(tape, v[static_cast<std::size_t>(i)], params.attn_v[static_cast<std::size_t>(i)]);
    pre = i == 0 ? std::move(vi_proj) : add(tape, pre, vi_proj);
  }
  Tensor m = tanh(tape, add(tape, pre, query));       // (N, a)
  Tensor scores = matmul(tape, m, params.attn_out);   // (N, n)
  Tensor pooled = mean(tape, scores, /*axis=*/0);     // (n): mean over frames
  Tensor weights = softmax(tape, pooled, /*axis=*/0);

  FusedStep out;
  out.weights = weights;
  for (int i = 0; i < n; ++i) {
    Tensor wi = slice(tape, weights, 0, i, 1);  // (1)
    Tensor term = mul(tape, v[static_cast<std::size_t>(i)], wi);
    out.fused = i == 0 ? std::move(term) : add(tape, out.fused, term);
  }
  return out;
}

}  // namespace capfuse
