#include <benchmark/benchmark.h>

#include "capfuse/inference.hpp"
#include "capfuse/synthetic.hpp"
#include "capfuse/training.hpp"

namespace {

using namespace capfuse;

struct DecodeFixture {
  SyntheticData data;
  CaptionModel model;

  static DecodeFixture make(const std::string& decoder) {
    SyntheticSpec spec;
    spec.n_videos = 4;
    SyntheticData d = gen_synthetic(spec);
    ModelConfig mc;
    mc.decoder = decoder;
    mc.model_dim = 64;
    mc.vocab_size = d.vocab.size();
    mc.modalities = {{"motion", 24}, {"appearance", 16}, {"audio", 8}, {"semantic", 12}};
    CaptionModel m(mc, 7);
    return {std::move(d), std::move(m)};
  }
};

void BM_GreedyDecode(benchmark::State& state, const std::string& decoder) {
  auto fx = DecodeFixture::make(decoder);
  for (auto _ : state) {
    const auto ids = greedy_decode({&fx.model}, fx.data.bundles[0], 20);
    benchmark::DoNotOptimize(ids.data());
  }
}
BENCHMARK_CAPTURE(BM_GreedyDecode, topdown, std::string("topdown"));
BENCHMARK_CAPTURE(BM_GreedyDecode, xlan, std::string("xlan"));

void BM_BeamSearch(benchmark::State& state) {
  auto fx = DecodeFixture::make("topdown");
  const int beam = static_cast<int>(state.range(0));
  for (auto _ : state) {
    const auto r = beam_search({&fx.model}, fx.data.bundles[0], beam, 20);
    benchmark::DoNotOptimize(r.best.data());
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(3)->Arg(8);

void BM_TrainStepXe(benchmark::State& state, const std::string& decoder) {
  auto fx = DecodeFixture::make(decoder);
  AdamState adam;
  adam.lr = 5e-4;
  Rng rng(3);
  for (auto _ : state) {
    fx.model.params().zero_grad();
    Tape tape;
    const auto embedded = fx.model.embed(tape, fx.data.bundles[0]);
    DecoderState st = fx.model.initial_state();
    std::vector<Tensor> logits;
    const auto& ref = fx.data.captions[0].references[0];
    int prev = Vocab::kBos;
    for (const int target : ref) {
      logits.push_back(fx.model.step(tape, st, prev, embedded).logits);
      prev = target;
    }
    Tensor rows = stack_rows(tape, logits);
    const std::vector<float> mask(ref.size(), 1.0f);
    Tensor loss = xe_loss(tape, rows, ref, mask);
    tape.backward(loss);
    clip_global_grad_norm(fx.model.params(), 5.0);
    adam_step(fx.model.params(), adam);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK_CAPTURE(BM_TrainStepXe, topdown, std::string("topdown"));
BENCHMARK_CAPTURE(BM_TrainStepXe, xlan, std::string("xlan"));

}  // namespace

BENCHMARK_MAIN();
