#include <algorithm>

#include "doctest.h"

#include "capfuse/metrics.hpp"
#include "capfuse/rng.hpp"

#include "oracles.hpp"

using namespace capfuse;
using metrics::Tokens;

namespace {

struct RandomCorpus {
  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
};

Tokens random_sentence(Rng& rng, int vocab, int min_len, int max_len) {
  Tokens t;
  const int len = min_len + rng.uniform_int(max_len - min_len + 1);
  for (int i = 0; i < len; ++i) t.push_back("w" + std::to_string(rng.uniform_int(vocab)));
  return t;
}

RandomCorpus random_corpus(std::uint64_t seed, int n, int vocab = 12, int max_len = 8) {
  Rng rng(seed);
  RandomCorpus c;
  for (int i = 0; i < n; ++i) {
    c.cands.push_back(random_sentence(rng, vocab, 1, max_len));
    std::vector<Tokens> refs;
    const int n_refs = 1 + rng.uniform_int(3);
    for (int r = 0; r < n_refs; ++r) refs.push_back(random_sentence(rng, vocab, 1, max_len));
    c.refs.push_back(std::move(refs));
  }
  return c;
}

// Identity corpus with pairwise-disjoint token sets (no shared n-grams at all).
RandomCorpus identity_corpus(int n, int len = 5) {
  RandomCorpus c;
  for (int i = 0; i < n; ++i) {
    Tokens t;
    for (int k = 0; k < len; ++k) t.push_back("v" + std::to_string(i) + "t" + std::to_string(k));
    c.cands.push_back(t);
    c.refs.push_back({t});
  }
  return c;
}

}  // namespace

TEST_CASE("bleu4 is 1.0 on the identity corpus") {
  const auto c = identity_corpus(6);
  CHECK(metrics::bleu4(c.cands, c.refs) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bleu4 clipping example scores zero via empty bigrams") {
  const std::vector<Tokens> cands = {{"the", "the", "the", "the"}};
  const std::vector<std::vector<Tokens>> refs = {{{"the", "cat"}}};
  CHECK(metrics::bleu4(cands, refs) == 0.0);
  // The unigram layer alone shows the clipped 1/4 precision.
  const double smoothed = metrics::sentence_bleu4_smoothed(cands[0], refs[0]);
  CHECK(smoothed > 0.0);  // add-one smoothing keeps the signal alive
}

TEST_CASE("bleu4 rejects an empty candidate list") {
  CHECK_THROWS_AS(metrics::bleu4({}, {}), DataError);
}

TEST_CASE("bleu4 matches the brute-force oracle on random corpora") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto c = random_corpus(seed, 8);
    const double got = metrics::bleu4(c.cands, c.refs);
    const double want = oracles::bleu4(c.cands, c.refs);
    CHECK(std::abs(got - want) < 1e-9);
  }
}

TEST_CASE("rouge_l hand example") {
  const Tokens cand = {"a", "c", "d"};
  const std::vector<Tokens> refs = {{"a", "b", "c", "d"}};
  const double f = metrics::rouge_l(cand, refs);
  // LCS 3, R = 0.75, P = 1: F = (1 + 1.44) * 0.75 / (0.75 + 1.44)
  CHECK(f == doctest::Approx(2.44 * 0.75 / 2.19).epsilon(1e-9));
}

TEST_CASE("rouge_l identity and disjoint cases") {
  const Tokens cand = {"x", "y", "z"};
  CHECK(metrics::rouge_l(cand, {cand}) == doctest::Approx(1.0));
  CHECK(metrics::rouge_l(cand, {{"p", "q"}}) == 0.0);
  CHECK(metrics::rouge_l({}, {cand}) == 0.0);
}

TEST_CASE("rouge_l matches the DP oracle on random corpora") {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const auto c = random_corpus(seed, 6);
    for (std::size_t i = 0; i < c.cands.size(); ++i) {
      const double got = metrics::rouge_l(c.cands[i], c.refs[i]);
      const double want = oracles::rouge_l(c.cands[i], c.refs[i]);
      CHECK(std::abs(got - want) < 1e-6);
    }
  }
}

TEST_CASE("cider_d scores 10 on a distinct identity corpus") {
  const auto c = identity_corpus(8);
  const auto r = metrics::cider_d(c.cands, c.refs);
  for (const double s : r.per_sentence) CHECK(s == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(r.corpus_mean == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("cider_d zero overlap scores zero") {
  auto c = identity_corpus(4);
  c.cands[0] = {"zz1", "zz2"};
  const auto r = metrics::cider_d(c.cands, c.refs);
  CHECK(r.per_sentence[0] == 0.0);
}

TEST_CASE("cider_d needs a corpus of at least 2") {
  const auto c = identity_corpus(1);
  CHECK_THROWS_AS(metrics::cider_d(c.cands, c.refs), DataError);
}

TEST_CASE("cider_d matches the scripted oracle on random corpora") {
  for (std::uint64_t seed = 200; seed < 230; ++seed) {
    const auto c = random_corpus(seed, 7);
    std::vector<double> oracle_sent;
    const double want = oracles::cider_d(c.cands, c.refs, &oracle_sent);
    const auto got = metrics::cider_d(c.cands, c.refs);
    CHECK(std::abs(got.corpus_mean - want) < 1e-6);
    for (std::size_t i = 0; i < oracle_sent.size(); ++i) {
      CHECK(std::abs(got.per_sentence[i] - oracle_sent[i]) < 1e-6);
    }
  }
}

TEST_CASE("meteor_exact four-token identity example") {
  const Tokens cand = {"a", "b", "c", "d"};
  // m = 4, chunks = 1, F = 1, penalty = 0.5 * (1/4)^3
  CHECK(metrics::meteor_exact(cand, {cand}) == doctest::Approx(0.9921875).epsilon(1e-12));
}

TEST_CASE("meteor_exact zero-match and single-token cases") {
  CHECK(metrics::meteor_exact({"a"}, {{"b"}}) == 0.0);
  // One match, one chunk, penalty 0.5, F = 1.
  CHECK(metrics::meteor_exact({"a"}, {{"a"}}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("meteor_exact matches the exhaustive oracle on random corpora") {
  for (std::uint64_t seed = 300; seed < 330; ++seed) {
    const auto c = random_corpus(seed, 5, /*vocab=*/6, /*max_len=*/7);
    for (std::size_t i = 0; i < c.cands.size(); ++i) {
      const double got = metrics::meteor_exact(c.cands[i], c.refs[i]);
      const double want = oracles::meteor_exact(c.cands[i], c.refs[i]);
      CHECK(std::abs(got - want) < 1e-6);
    }
  }
}

TEST_CASE("metrics are invariant to corpus permutation") {
  const auto c = random_corpus(77, 9);
  std::vector<std::size_t> order(c.cands.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(4);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
  }
  RandomCorpus shuffled;
  for (const std::size_t i : order) {
    shuffled.cands.push_back(c.cands[i]);
    shuffled.refs.push_back(c.refs[i]);
  }
  CHECK(metrics::bleu4(c.cands, c.refs) ==
        doctest::Approx(metrics::bleu4(shuffled.cands, shuffled.refs)).epsilon(1e-12));
  CHECK(metrics::rouge_l_corpus(c.cands, c.refs) ==
        doctest::Approx(metrics::rouge_l_corpus(shuffled.cands, shuffled.refs)).epsilon(1e-12));
  CHECK(metrics::cider_d(c.cands, c.refs).corpus_mean ==
        doctest::Approx(metrics::cider_d(shuffled.cands, shuffled.refs).corpus_mean)
            .epsilon(1e-12));
  CHECK(metrics::meteor_exact_corpus(c.cands, c.refs) ==
        doctest::Approx(metrics::meteor_exact_corpus(shuffled.cands, shuffled.refs))
            .epsilon(1e-12));
}

TEST_CASE("scores stay in their stated ranges") {
  for (std::uint64_t seed = 400; seed < 420; ++seed) {
    const auto c = random_corpus(seed, 6);
    const double b = metrics::bleu4(c.cands, c.refs);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
    const auto cd = metrics::cider_d(c.cands, c.refs);
    for (const double s : cd.per_sentence) {
      CHECK(s >= 0.0);
      CHECK(s <= 10.0 + 1e-9);
    }
    for (std::size_t i = 0; i < c.cands.size(); ++i) {
      const double r = metrics::rouge_l(c.cands[i], c.refs[i]);
      CHECK(r >= 0.0);
      CHECK(r <= 1.0 + 1e-12);
      const double m = metrics::meteor_exact(c.cands[i], c.refs[i]);
      CHECK(m >= 0.0);
      CHECK(m <= 1.0 + 1e-12);
    }
  }
}
