#pragma once

#include <string>
#include <vector>

#include "capfuse/data.hpp"
#include "capfuse/ops.hpp"
#include "capfuse/params.hpp"

namespace capfuse {

/// Parameters for modality embedding and the per-step feature attention.
/// Storage is row-vector convention: x (1,K) times W (K,C). Modality order is
/// fixed at construction and recorded in `modality_names`.
struct FusionParams {
  std::vector<std::string> modality_names;
  std::vector<Tensor> embed_w;  // per modality: (D_i, d)
  std::vector<Tensor> embed_b;  // per modality: (d)
  std::vector<Tensor> attn_v;   // per modality: (d, a)
  Tensor attn_h;                // (h_dim, a)
  Tensor attn_out;              // (a, n)
  bool embed_relu = true;

  int n_modalities() const { return static_cast<int>(modality_names.size()); }

  /// Creates freshly initialized parameters and registers them in the store
  /// under `prefix`.
  static FusionParams init(ParamStore& store, const std::string& prefix,
                           const std::vector<std::pair<std::string, int>>& modality_dims,
                           int model_dim, int attn_dim, int h_dim, bool embed_relu, Rng& rng);
  /// Rebinds to existing store entries (checkpoint load path).
  static FusionParams bind(ParamStore& store, const std::string& prefix,
                           const std::vector<std::pair<std::string, int>>& modality_dims,
                           bool embed_relu);
};

/// Per-step fusion output: attention weights over modalities (sums to 1) and
/// the fused feature matrix.
struct FusedStep {
  Tensor weights;  // (n)
  Tensor fused;    // (N, d)
};

/// V_i = relu(X_i W_i + b_i) per modality, order preserved. The bundle must
/// already be frame-aligned.
std::vector<Tensor> embed_modalities(Tape& tape, const FeatureBundle& bundle,
                                     const FusionParams& params);

/// Modality attention: scores each modality from the previous decoder hidden
/// state and every frame column, mean-pools the per-frame scores, softmaxes
/// over modalities and mixes the V_i with the resulting weights.
FusedStep feature_attention(Tape& tape, const Tensor& h_prev, const std::vector<Tensor>& v,
                            const FusionParams& params);

}  // namespace capfuse
