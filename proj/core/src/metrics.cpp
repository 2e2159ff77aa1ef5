#include "capfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>

namespace capfuse::metrics {

namespace {

// N-grams are keyed as tokens joined with an unlikely separator byte.
std::string ngram_key(const Tokens& t, std::size_t start, int n) {
  std::string key;
  for (int k = 0; k < n; ++k) {
    if (k > 0) key += '\x1f';
    key += t[start + k];
  }
  return key;
}

using Counts = std::unordered_map<std::string, int>;

Counts ngram_counts(const Tokens& t, int n) {
  Counts c;
  if (static_cast<int>(t.size()) >= n) {
    for (std::size_t i = 0; i + n <= t.size(); ++i) c[ngram_key(t, i, n)] += 1;
  }
  return c;
}

void check_corpus(const std::vector<Tokens>& candidates,
                  const std::vector<std::vector<Tokens>>& references, const char* op) {
  if (candidates.empty()) throw DataError(std::string(op) + ": empty candidate list");
  if (candidates.size() != references.size()) {
    throw DataError(std::string(op) + ": " + std::to_string(candidates.size()) +
                    " candidates vs " + std::to_string(references.size()) + " reference sets");
  }
  for (const auto& refs : references) {
    if (refs.empty()) throw DataError(std::string(op) + ": empty reference set");
  }
}

int closest_ref_length(std::size_t cand_len, const std::vector<Tokens>& refs) {
  int best = static_cast<int>(refs[0].size());
  for (const Tokens& r : refs) {
    const int len = static_cast<int>(r.size());
    const auto diff = [&](int l) {
      return std::abs(l - static_cast<int>(cand_len));
    };
    if (diff(len) < diff(best) || (diff(len) == diff(best) && len < best)) best = len;
  }
  return best;
}

}  // namespace

double bleu4(const std::vector<Tokens>& candidates,
             const std::vector<std::vector<Tokens>>& references) {
  check_corpus(candidates, references, "bleu4");
  std::int64_t clipped[4] = {0, 0, 0, 0};
  std::int64_t total[4] = {0, 0, 0, 0};
  std::int64_t cand_len = 0;
  std::int64_t ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Tokens& cand = candidates[i];
    cand_len += static_cast<std::int64_t>(cand.size());
    ref_len += closest_ref_length(cand.size(), references[i]);
    for (int n = 1; n <= 4; ++n) {
      const Counts cc = ngram_counts(cand, n);
      Counts max_ref;
      for (const Tokens& r : references[i]) {
        for (const auto& [g, k] : ngram_counts(r, n)) {
          max_ref[g] = std::max(max_ref[g], k);
        }
      }
      for (const auto& [g, k] : cc) {
        total[n - 1] += k;
        const auto it = max_ref.find(g);
        if (it != max_ref.end()) clipped[n - 1] += std::min(k, it->second);
      }
    }
  }
  if (cand_len == 0) return 0.0;
  double log_prec = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (clipped[n] == 0 || total[n] == 0) return 0.0;
    log_prec += std::log(static_cast<double>(clipped[n]) / static_cast<double>(total[n]));
  }
  const double bp = cand_len > ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * std::exp(log_prec / 4.0);
}

double sentence_bleu4_smoothed(const Tokens& candidate, const std::vector<Tokens>& references) {
  if (references.empty()) throw DataError("sentence_bleu4: empty reference set");
  if (candidate.empty()) return 0.0;
  double log_prec = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const Counts cc = ngram_counts(candidate, n);
    Counts max_ref;
    for (const Tokens& r : references) {
      for (const auto& [g, k] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], k);
    }
    std::int64_t clipped = 0, total = 0;
    for (const auto& [g, k] : cc) {
      total += k;
      const auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += std::min(k, it->second);
    }
    log_prec += std::log(static_cast<double>(clipped + 1) / static_cast<double>(total + 1));
  }
  const auto cand_len = static_cast<std::int64_t>(candidate.size());
  const std::int64_t ref_len = closest_ref_length(candidate.size(), references);
  const double bp = cand_len > ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * std::exp(log_prec / 4.0);
}

namespace {

int lcs_length(const Tokens& a, const Tokens& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references, double beta) {
  if (references.empty()) throw DataError("rouge_l: empty reference set");
  if (candidate.empty()) return 0.0;
  double best = 0.0;
  for (const Tokens& ref : references) {
    if (ref.empty()) continue;
    const int lcs = lcs_length(candidate, ref);
    const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
    const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
    double f = 0.0;
    if (r > 0.0 || p > 0.0) {
      f = (1.0 + beta * beta) * r * p / (r + beta * beta * p);
    }
    best = std::max(best, f);
  }
  return best;
}

double rouge_l_corpus(const std::vector<Tokens>& candidates,
                      const std::vector<std::vector<Tokens>>& references, double beta) {
  check_corpus(candidates, references, "rouge_l");
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    total += rouge_l(candidates[i], references[i], beta);
  }
  return total / static_cast<double>(candidates.size());
}

CiderScorer::CiderScorer(const std::vector<std::vector<Tokens>>& ref_corpus, double sigma)
    : sigma_(sigma) {
  if (ref_corpus.size() < 2) {
    throw DataError("cider_d: corpus of size " + std::to_string(ref_corpus.size()) +
                    " is too small for IDF (need >= 2)");
  }
  for (const auto& refs : ref_corpus) {
    if (refs.empty()) throw DataError("cider_d: empty reference set");
    for (int n = 1; n <= 4; ++n) {
      std::set<std::string> seen;
      for (const Tokens& r : refs) {
        for (const auto& [g, k] : ngram_counts(r, n)) seen.insert(g);
      }
      for (const auto& g : seen) doc_freq_[n - 1][g] += 1;
    }
  }
  log_corpus_size_ = std::log(static_cast<double>(ref_corpus.size()));
}

double CiderScorer::score(const Tokens& candidate, const std::vector<Tokens>& references) const {
  if (references.empty()) throw DataError("cider_d: empty reference set");

  // TF-IDF vector for one sentence at order n; df is clamped to >= 1 so
  // n-grams unseen in any reference still get a finite idf of log(N).
  const auto tfidf = [&](const Counts& counts, int n, double& norm_out) {
    std::unordered_map<std::string, double> vec;
    double sq = 0.0;
    for (const auto& [g, k] : counts) {
      const auto it = doc_freq_[n - 1].find(g);
      const double df = it == doc_freq_[n - 1].end() ? 1.0 : std::max(1.0, double(it->second));
      const double w = k * (log_corpus_size_ - std::log(df));
      vec.emplace(g, w);
      sq += w * w;
    }
    norm_out = std::sqrt(sq);
    return vec;
  };

  double acc_over_refs[4] = {0.0, 0.0, 0.0, 0.0};
  Counts cand_counts[4];
  std::unordered_map<std::string, double> cand_vec[4];
  double cand_norm[4];
  for (int n = 1; n <= 4; ++n) {
    cand_counts[n - 1] = ngram_counts(candidate, n);
    cand_vec[n - 1] = tfidf(cand_counts[n - 1], n, cand_norm[n - 1]);
  }

  for (const Tokens& ref : references) {
    const double delta = static_cast<double>(candidate.size()) - static_cast<double>(ref.size());
    const double length_penalty = std::exp(-(delta * delta) / (2.0 * sigma_ * sigma_));
    for (int n = 1; n <= 4; ++n) {
      double ref_norm = 0.0;
      const auto ref_vec = tfidf(ngram_counts(ref, n), n, ref_norm);
      double dot = 0.0;
      for (const auto& [g, w] : cand_vec[n - 1]) {
        const auto it = ref_vec.find(g);
        if (it != ref_vec.end()) dot += std::min(w, it->second) * it->second;
      }
      double cos = 0.0;
      if (cand_norm[n - 1] > 0.0 && ref_norm > 0.0) {
        cos = dot / (cand_norm[n - 1] * ref_norm);
      }
      acc_over_refs[n - 1] += cos * length_penalty;
    }
  }

  double mean_n = 0.0;
  for (int n = 0; n < 4; ++n) mean_n += acc_over_refs[n] / static_cast<double>(references.size());
  return 10.0 * mean_n / 4.0;
}

CiderResult cider_d(const std::vector<Tokens>& candidates,
                    const std::vector<std::vector<Tokens>>& references, double sigma) {
  check_corpus(candidates, references, "cider_d");
  const CiderScorer scorer(references, sigma);
  CiderResult result;
  result.per_sentence.reserve(candidates.size());
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = scorer.score(candidates[i], references[i]);
    result.per_sentence.push_back(s);
    total += s;
  }
  result.corpus_mean = total / static_cast<double>(candidates.size());
  return result;
}

namespace {

// Exact minimal-chunk search over maximum one-to-one exact alignments.
// Candidate positions are processed in order; each either matches an unused
// occurrence of the same word in the reference or is skipped (when skipping
// still permits a maximum alignment). Branches that continue the current
// chunk are explored first so the bound tightens quickly.
struct ChunkSearch {
  const Tokens& cand;
  const Tokens& ref;
  std::vector<std::vector<int>> ref_positions_of_word;  // per candidate position
  std::vector<int> suffix_max_matches;                  // bound helper
  std::unordered_map<std::string, int> ref_avail;
  std::unordered_map<std::string, int> cand_suffix;
  std::vector<bool> ref_used;
  int target_matches = 0;
  int best_chunks = 0;
  long nodes = 0;
  static constexpr long kNodeBudget = 2000000;

  ChunkSearch(const Tokens& c, const Tokens& r) : cand(c), ref(r), ref_used(r.size(), false) {
    std::unordered_map<std::string, std::vector<int>> where;
    for (std::size_t j = 0; j < ref.size(); ++j) where[ref[j]].push_back(static_cast<int>(j));
    ref_positions_of_word.resize(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) {
      auto it = where.find(cand[i]);
      if (it != where.end()) ref_positions_of_word[i] = it->second;
    }
    Counts rc = ngram_counts(ref, 1);
    Counts cc = ngram_counts(cand, 1);
    for (const auto& [w, k] : cc) {
      auto it = rc.find(w);
      if (it != rc.end()) target_matches += std::min(k, it->second);
      ref_avail[w] = it == rc.end() ? 0 : it->second;
    }
  }

  // Max matches achievable from candidate position i with current ref_avail.
  int bound_from(std::size_t i) {
    std::unordered_map<std::string, int> local;
    int b = 0;
    for (std::size_t k = i; k < cand.size(); ++k) {
      auto it = ref_avail.find(cand[k]);
      const int avail = it == ref_avail.end() ? 0 : it->second;
      int& used = local[cand[k]];
      if (used < avail) {
        ++used;
        ++b;
      }
    }
    return b;
  }

  void dfs(std::size_t i, int matches, int chunks, int prev_ref) {
    if (++nodes > kNodeBudget) return;  // budget guard; best found so far stands
    if (chunks >= best_chunks) return;
    if (i == cand.size()) {
      if (matches == target_matches) best_chunks = chunks;
      return;
    }
    if (matches + bound_from(i) < target_matches) return;

    auto& positions = ref_positions_of_word[i];
    // Chunk-continuing position first.
    if (prev_ref >= 0 && prev_ref + 1 < static_cast<int>(ref.size()) &&
        !ref_used[prev_ref + 1] && ref[prev_ref + 1] == cand[i]) {
      ref_used[prev_ref + 1] = true;
      --ref_avail[cand[i]];
      dfs(i + 1, matches + 1, chunks, prev_ref + 1);
      ++ref_avail[cand[i]];
      ref_used[prev_ref + 1] = false;
    }
    for (const int j : positions) {
      if (ref_used[j] || j == prev_ref + 1) continue;
      ref_used[j] = true;
      --ref_avail[cand[i]];
      dfs(i + 1, matches + 1, chunks + 1, j);
      ++ref_avail[cand[i]];
      ref_used[j] = false;
    }
    // Skipping breaks candidate adjacency, so no later match can extend the
    // current chunk.
    dfs(i + 1, matches, chunks, -2);
  }

  // Returns (matches, min chunks).
  std::pair<int, int> run() {
    if (target_matches == 0) return {0, 0};
    best_chunks = target_matches + 1;
    dfs(0, 0, 0, -2);  // prev_ref -2: no position adjoins the first match
    return {target_matches, best_chunks};
  }
};

}  // namespace

double meteor_exact(const Tokens& candidate, const std::vector<Tokens>& references, double alpha,
                    double beta_frag, double gamma) {
  if (references.empty()) throw DataError("meteor_exact: empty reference set");
  if (candidate.empty()) return 0.0;
  double best = 0.0;
  for (const Tokens& ref : references) {
    if (ref.empty()) continue;
    ChunkSearch search(candidate, ref);
    const auto [m, chunks] = search.run();
    if (m == 0) continue;
    const double p = static_cast<double>(m) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(m) / static_cast<double>(ref.size());
    const double f = p * r / (alpha * p + (1.0 - alpha) * r);
    const double penalty = gamma * std::pow(static_cast<double>(chunks) / m, beta_frag);
    best = std::max(best, f * (1.0 - penalty));
  }
  return best;
}

double meteor_exact_corpus(const std::vector<Tokens>& candidates,
                           const std::vector<std::vector<Tokens>>& references) {
  check_corpus(candidates, references, "meteor_exact");
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    total += meteor_exact(candidates[i], references[i]);
  }
  return total / static_cast<double>(candidates.size());
}

MetricReport score_all(const std::vector<Tokens>& candidates,
                       const std::vector<std::vector<Tokens>>& references) {
  MetricReport r;
  r.bleu4 = bleu4(candidates, references);
  r.rouge_l = rouge_l_corpus(candidates, references);
  r.cider_d = cider_d(candidates, references).corpus_mean;
  r.meteor_exact = meteor_exact_corpus(candidates, references);
  return r;
}

}  // namespace capfuse::metrics
