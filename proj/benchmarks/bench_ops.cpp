#include <benchmark/benchmark.h>

#include "capfuse/ops.hpp"
#include "capfuse/rng.hpp"

namespace {

using namespace capfuse;

Tensor random_leaf(Shape shape, std::uint64_t seed, bool requires_grad = true) {
  Rng rng(seed);
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor::leaf(std::move(shape), std::move(v), requires_grad);
}

void BM_MatmulForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor a = random_leaf({n, n}, 1, false);
  const Tensor b = random_leaf({n, n}, 2, false);
  for (auto _ : state) {
    Tape tape;
    Tensor c = matmul(tape, a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * 2L * n * n * n);
}
BENCHMARK(BM_MatmulForward)->Arg(32)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor a = random_leaf({n, n}, 1);
  const Tensor b = random_leaf({n, n}, 2);
  for (auto _ : state) {
    Tape tape;
    Tensor loss = mean_all(tape, matmul(tape, a, b));
    tape.backward(loss);
    benchmark::DoNotOptimize(a.grad().data());
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);

void BM_SoftmaxRows(benchmark::State& state) {
  const Tensor x = random_leaf({64, 512}, 3, false);
  for (auto _ : state) {
    Tape tape;
    Tensor y = softmax(tape, x, 1);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(BM_SoftmaxRows);

}  // namespace
