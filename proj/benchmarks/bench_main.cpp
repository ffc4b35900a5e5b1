#include <benchmark/benchmark.h>

#include <vector>

#include "uqfire/hetero_head.hpp"
#include "uqfire/layers.hpp"
#include "uqfire/uncertainty.hpp"

namespace uqfire {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

// One minibatch through a 45-step LSTM, forward only and forward + backward.
void BM_LstmSequence(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const bool with_backward = state.range(1) != 0;
  Rng rng(2);
  LstmLayer layer = LstmLayer::init(10, hidden, rng);
  const Tensor x = random_tensor({64, 45, 10}, rng);
  for (auto _ : state) {
    if (with_backward) {
      for (Tensor* p : {&layer.W, &layer.U, &layer.b}) p->zero_grad();
      backward(sum(lstm_sequence(layer, x)));
    } else {
      NoGradGuard guard;
      benchmark::DoNotOptimize(lstm_sequence(layer, x));
    }
  }
}
BENCHMARK(BM_LstmSequence)->Args({16, 0})->Args({16, 1})->Args({64, 0})->Args({64, 1})
    ->Unit(benchmark::kMillisecond);

void BM_Decompose(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  Rng rng(3);
  PredictiveSampleSet set(n, s, 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const double p = rng.uniform();
      set.at(i, j, 0) = p;
      set.at(i, j, 1) = 1.0 - p;
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(decompose(set));
}
BENCHMARK(BM_Decompose)->Args({20, 100})->Args({20, 1000});

void BM_TemperedSoftmaxRow(benchmark::State& state) {
  const auto S = static_cast<std::size_t>(state.range(0));
  const std::vector<double> f{0.3, -0.2}, sigma{0.8, 0.5};
  std::vector<double> out(S * 2);
  Rng rng(4);
  for (auto _ : state) {
    tempered_softmax_row(f, sigma, kDefaultTemperature, S, rng, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(S));
}
BENCHMARK(BM_TemperedSoftmaxRow)->Arg(100)->Arg(1000);

}  // namespace
}  // namespace uqfire

BENCHMARK_MAIN();
