#pragma once

#include <set>
#include <string>
#include <vector>

#include "capfuse/data.hpp"
#include "capfuse/ops.hpp"
#include "capfuse/params.hpp"

namespace capfuse {

/// Ordered attribute token list (default k = 300) for the multi-label head.
struct AttributeVocab {
  std::vector<std::string> tokens;

  int k() const { return static_cast<int>(tokens.size()); }
  int index_of(const std::string& token) const;  // -1 when absent

  std::string to_text() const;
  static AttributeVocab from_text(const std::string& text);
};

/// Small default English function-word list; also shipped as
/// tools/data/stopwords_en.txt for customization.
const std::set<std::string>& default_stopwords();

/// The k most frequent corpus tokens, excluding stopwords and tokens shorter
/// than 2 characters; ties broken lexicographically. Throws DataError naming
/// the shortfall when fewer than k tokens are eligible.
AttributeVocab build_attribute_vocab(const std::vector<std::vector<std::string>>& corpus, int k,
                                     const std::set<std::string>& stopwords);

/// Binary target vector: entry i is 1 iff attribute i occurs in any reference.
std::vector<float> attribute_targets(const CaptionRecord& record, const AttributeVocab& attrs,
                                     const Vocab& vocab);

/// MLP weights for the attribute head: pooled-visual -> hidden (tanh) -> k
/// (sigmoid).
struct SemanticParams {
  Tensor w1, b1, w2, b2;

  static SemanticParams init(ParamStore& store, const std::string& prefix, int input_dim,
                             int hidden_dim, int k, Rng& rng);
  static SemanticParams bind(ParamStore& store, const std::string& prefix);
};

/// Attribute probabilities in (0,1), differentiable through the tape.
Tensor semantic_forward(Tape& tape, const Tensor& pooled_visual, const SemanticParams& params);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7].
Tensor bce_loss(Tape& tape, const Tensor& probs, const Tensor& targets);

/// Mean over frames of the concatenated modality embeddings; the input to the
/// semantic head.
Tensor pooled_visual(Tape& tape, const std::vector<Tensor>& embedded);

/// Semantic feature stream: concat(attr_probs, aux_dists...) duplicated
/// n_frames times.
Matrix assemble_semantic_feature(const std::vector<float>& attr_probs,
                                 const std::vector<std::vector<float>>& aux_dists, int n_frames);

}  // namespace capfuse
