#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "capfuse/errors.hpp"

namespace capfuse::metrics {

using Tokens = std::vector<std::string>;

/// Corpus-level BLEU-4: clipped modified n-gram precisions aggregated over the
/// corpus, brevity penalty from closest-reference lengths, zero if any
/// precision is zero. Range [0, 1].
double bleu4(const std::vector<Tokens>& candidates,
             const std::vector<std::vector<Tokens>>& references);

/// Sentence BLEU-4 with add-one smoothing on all n-gram precisions; used as
/// half of the self-critical reward. Empty candidates score 0.
double sentence_bleu4_smoothed(const Tokens& candidate, const std::vector<Tokens>& references);

/// ROUGE-L F-measure (beta-weighted), max over references.
double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references, double beta = 1.2);
double rouge_l_corpus(const std::vector<Tokens>& candidates,
                      const std::vector<std::vector<Tokens>>& references, double beta = 1.2);

/// CIDEr-D document frequencies computed over a reference corpus; reusable for
/// scoring individual sentences (self-critical rewards score against the
/// training corpus statistics).
class CiderScorer {
 public:
  CiderScorer(const std::vector<std::vector<Tokens>>& ref_corpus, double sigma = 6.0);

  /// CIDEr-D for one candidate against its reference set, in [0, 10].
  double score(const Tokens& candidate, const std::vector<Tokens>& references) const;

 private:
  std::unordered_map<std::string, int> doc_freq_[4];
  double log_corpus_size_ = 0.0;
  double sigma_ = 6.0;
};

struct CiderResult {
  std::vector<double> per_sentence;  // each in [0, 10]
  double corpus_mean = 0.0;
};

/// Corpus CIDEr-D; IDF comes from the given reference sets. Requires a corpus
/// of at least 2 videos (degenerate IDF otherwise).
CiderResult cider_d(const std::vector<Tokens>& candidates,
                    const std::vector<std::vector<Tokens>>& references, double sigma = 6.0);

/// Exact-match METEOR (no synonym or stem stages): maximal one-to-one unigram
/// alignment with minimal chunk count, harmonic mean weighted by alpha, and a
/// fragmentation penalty gamma * (chunks / matches)^beta_frag. Max over
/// references.
double meteor_exact(const Tokens& candidate, const std::vector<Tokens>& references,
                    double alpha = 0.9, double beta_frag = 3.0, double gamma = 0.5);
double meteor_exact_corpus(const std::vector<Tokens>& candidates,
                           const std::vector<std::vector<Tokens>>& references);

struct MetricReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
  double meteor_exact = 0.0;
};

MetricReport score_all(const std::vector<Tokens>& candidates,
                       const std::vector<std::vector<Tokens>>& references);

}  // namespace capfuse::metrics
