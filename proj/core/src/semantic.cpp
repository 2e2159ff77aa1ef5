#include "capfuse/semantic.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace capfuse {

int AttributeVocab::index_of(const std::string& token) const {
  const auto it = std::find(tokens.begin(), tokens.end(), token);
  return it == tokens.end() ? -1 : static_cast<int>(it - tokens.begin());
}

std::string AttributeVocab::to_text() const {
  std::string out;
  for (const auto& t : tokens) {
    out += t;
    out += '\n';
  }
  return out;
}

AttributeVocab AttributeVocab::from_text(const std::string& text) {
  AttributeVocab v;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) v.tokens.push_back(line);
  }
  return v;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",    "and",  "are",  "as",   "at",   "be",   "by",    "for",
      "from", "has",   "he",   "her",  "his",  "in",   "is",   "it",    "its",
      "of",   "on",    "or",   "she",  "that", "the",  "their", "them", "then",
      "there", "they", "this", "to",   "was",  "were", "with", "while"};
  return words;
}

AttributeVocab build_attribute_vocab(const std::vector<std::vector<std::string>>& corpus, int k,
                                     const std::set<std::string>& stopwords) {
  if (corpus.empty()) throw DataError("build_attribute_vocab: empty corpus");
  std::map<std::string, std::int64_t> counts;
  for (const auto& sent : corpus) {
    for (const auto& tok : sent) {
      if (tok.size() < 2 || stopwords.count(tok) > 0) continue;
      counts[tok] += 1;
    }
  }
  if (static_cast<int>(counts.size()) < k) {
    throw DataError("build_attribute_vocab: only " + std::to_string(counts.size()) +
                    " eligible tokens for k=" + std::to_string(k) + " (short by " +
                    std::to_string(k - static_cast<int>(counts.size())) + ")");
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  AttributeVocab v;
  v.tokens.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) v.tokens.push_back(ranked[static_cast<std::size_t>(i)].first);
  return v;
}

std::vector<float> attribute_targets(const CaptionRecord& record, const AttributeVocab& attrs,
                                     const Vocab& vocab) {
  std::vector<float> target(static_cast<std::size_t>(attrs.k()), 0.0f);
  std::set<std::string> present;
  for (const auto& ref : record.references) {
    for (const auto& tok : vocab.decode(ref)) present.insert(tok);
  }
  for (int i = 0; i < attrs.k(); ++i) {
    if (present.count(attrs.tokens[static_cast<std::size_t>(i)]) > 0) {
      target[static_cast<std::size_t>(i)] = 1.0f;
    }
  }
  return target;
}

SemanticParams SemanticParams::init(ParamStore& store, const std::string& prefix, int input_dim,
                                    int hidden_dim, int k, Rng& rng) {
  SemanticParams p;
  p.w1 = store.add(prefix + ".W1", xavier_uniform(input_dim, hidden_dim, rng));
  p.b1 = store.add(prefix + ".b1", zeros_param(hidden_dim));
  p.w2 = store.add(prefix + ".W2", xavier_uniform(hidden_dim, k, rng));
  p.b2 = store.add(prefix + ".b2", zeros_param(k));
  return p;
}

SemanticParams SemanticParams::bind(ParamStore& store, const std::string& prefix) {
  SemanticParams p;
  p.w1 = store.at(prefix + ".W1");
  p.b1 = store.at(prefix + ".b1");
  p.w2 = store.at(prefix + ".W2");
  p.b2 = store.at(prefix + ".b2");
  return p;
}

Tensor semantic_forward(Tape& tape, const Tensor& pooled_visual, const SemanticParams& params) {
  if (pooled_visual.rank() != 1 || pooled_visual.dim(0) != params.w1.dim(0)) {
    throw ShapeError("semantic_forward: input shape " + shape_to_string(pooled_visual.shape()) +
                     " does not match W1 " + shape_to_string(params.w1.shape()));
  }
  Tensor hidden = tanh(tape, add(tape, matmul(tape, pooled_visual, params.w1), params.b1));
  return sigmoid(tape, add(tape, matmul(tape, hidden, params.w2), params.b2));
}

Tensor bce_loss(Tape& tape, const Tensor& probs, const Tensor& targets) {
  if (probs.shape() != targets.shape() || probs.rank() != 1) {
    throw ShapeError("bce_loss: probs " + shape_to_string(probs.shape()) + " vs targets " +
                     shape_to_string(targets.shape()));
  }
  const Tensor ones = Tensor::full(probs.shape(), 1.0f);
  Tensor p = clamp(tape, probs, 1e-7f, 1.0f - 1e-7f);
  Tensor pos = mul(tape, targets, log(tape, p));
  Tensor one_minus_t = add(tape, ones, scalar_mul(tape, targets, -1.0f));
  Tensor one_minus_p = add(tape, ones, scalar_mul(tape, p, -1.0f));
  Tensor neg = mul(tape, one_minus_t, log(tape, one_minus_p));
  return scalar_mul(tape, mean_all(tape, add(tape, pos, neg)), -1.0f);
}

Tensor pooled_visual(Tape& tape, const std::vector<Tensor>& embedded) {
  if (embedded.empty()) throw ShapeError("pooled_visual: no modalities");
  const Tensor joined =
      embedded.size() == 1 ? embedded[0] : concat(tape, embedded, /*axis=*/1);
  return mean(tape, joined, /*axis=*/0);
}

Matrix assemble_semantic_feature(const std::vector<float>& attr_probs,
                                 const std::vector<std::vector<float>>& aux_dists, int n_frames) {
  if (n_frames < 1) throw DataError("assemble_semantic_feature: n_frames must be >= 1");
  std::vector<float> row = attr_probs;
  for (const auto& d : aux_dists) row.insert(row.end(), d.begin(), d.end());
  Matrix m(n_frames, static_cast<int>(row.size()));
  for (int j = 0; j < n_frames; ++j) {
    std::copy(row.begin(), row.end(), m.data.begin() + static_cast<std::size_t>(j) * row.size());
  }
  return m;
}

}  // namespace capfuse
