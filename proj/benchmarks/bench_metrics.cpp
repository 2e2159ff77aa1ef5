#include <benchmark/benchmark.h>

#include "capfuse/metrics.hpp"
#include "capfuse/rng.hpp"

namespace {

using namespace capfuse;
using metrics::Tokens;

struct Corpus {
  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
};

Corpus random_corpus(int n_sentences, int vocab, int max_len, std::uint64_t seed) {
  Rng rng(seed);
  const auto sentence = [&]() {
    Tokens t;
    const int len = 3 + rng.uniform_int(max_len - 3);
    for (int i = 0; i < len; ++i) t.push_back("w" + std::to_string(rng.uniform_int(vocab)));
    return t;
  };
  Corpus c;
  for (int i = 0; i < n_sentences; ++i) {
    c.cands.push_back(sentence());
    c.refs.push_back({sentence(), sentence(), sentence()});
  }
  return c;
}

void BM_Bleu4(benchmark::State& state) {
  const Corpus c = random_corpus(static_cast<int>(state.range(0)), 50, 20, 1);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::bleu4(c.cands, c.refs));
}
BENCHMARK(BM_Bleu4)->Arg(32)->Arg(256);

void BM_CiderD(benchmark::State& state) {
  const Corpus c = random_corpus(static_cast<int>(state.range(0)), 50, 20, 2);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::cider_d(c.cands, c.refs).corpus_mean);
}
BENCHMARK(BM_CiderD)->Arg(32)->Arg(256);

void BM_RougeL(benchmark::State& state) {
  const Corpus c = random_corpus(64, 50, 20, 3);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::rouge_l_corpus(c.cands, c.refs));
}
BENCHMARK(BM_RougeL);

void BM_MeteorExact(benchmark::State& state) {
  const Corpus c = random_corpus(64, 50, 12, 4);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::meteor_exact_corpus(c.cands, c.refs));
}
BENCHMARK(BM_MeteorExact);

}  // namespace
