#include <benchmark/benchmark.h>

#include "clab/rng.hpp"
#include "clab/tape.hpp"
#include "clab/tensor.hpp"

namespace {

clab::Tensor rand_tensor(std::vector<std::size_t> shape, clab::Rng& rng) {
  clab::Tensor t = clab::Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_MatMul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  clab::Rng rng(1);
  clab::Tape t;
  clab::NodeId a = t.input("a", rand_tensor({n, n}, rng));
  clab::NodeId b = t.input("b", rand_tensor({n, n}, rng));
  t.matmul(a, b);
  for (auto _ : state) {
    t.forward({});
    benchmark::DoNotOptimize(t.value(2).data.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_MatMul)->Arg(32)->Arg(128)->Arg(256);

void BM_MlpStepForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  clab::Rng rng(2);
  clab::Tensor x0 = rand_tensor({batch, 784}, rng);
  clab::Tensor w1 = rand_tensor({784, 100}, rng);
  clab::Tensor b1 = rand_tensor({100}, rng);
  clab::Tensor w2 = rand_tensor({100, 100}, rng);
  clab::Tensor b2 = rand_tensor({100}, rng);
  clab::Tensor w3 = rand_tensor({100, 10}, rng);
  clab::Tensor b3 = rand_tensor({10}, rng);
  std::vector<std::size_t> targets(batch, 3);
  for (auto _ : state) {
    clab::Tape t;
    clab::NodeId x = t.input("x", x0);
    clab::NodeId h1 = t.relu(t.add_row(t.matmul(x, t.param("w1", w1)), t.param("b1", b1)));
    clab::NodeId h2 = t.relu(t.add_row(t.matmul(h1, t.param("w2", w2)), t.param("b2", b2)));
    clab::NodeId logits = t.add_row(t.matmul(h2, t.param("w3", w3)), t.param("b3", b3));
    clab::NodeId loss = t.scale(t.mean(t.pick(t.log_softmax_rows(logits), targets)), -1.0);
    auto grads = t.backward(loss);
    benchmark::DoNotOptimize(grads);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpStepForwardBackward)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
