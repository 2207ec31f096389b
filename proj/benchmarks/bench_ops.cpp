#include <benchmark/benchmark.h>

#include "svlr/ops.hpp"
#include "svlr/rng.hpp"

using namespace svlr;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.uniform(-1.0, 1.0);
    return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

static void BM_matmul_forward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    Tensor a = rand_tensor({n, n}, rng);
    Tensor b = rand_tensor({n, n}, rng);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
}
BENCHMARK(BM_matmul_forward)->Arg(8)->Arg(32)->Arg(128);

static void BM_matmul_backward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    Tensor a = rand_tensor({n, n}, rng, true);
    Tensor b = rand_tensor({n, n}, rng, true);
    for (auto _ : state) {
        a.zero_grad();
        b.zero_grad();
        Tape tape;
        Tensor loss = sum(matmul(a, b));
        tape.backward(loss);
        benchmark::DoNotOptimize(a.grad().data());
    }
}
BENCHMARK(BM_matmul_backward)->Arg(8)->Arg(32);

static void BM_softmax(benchmark::State& state) {
    Rng rng(1);
    Tensor x = rand_tensor({static_cast<std::size_t>(state.range(0))}, rng);
    for (auto _ : state) {
        Tensor y = softmax(x);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_softmax)->Arg(16)->Arg(256);

static void BM_batch_norm_train(benchmark::State& state) {
    Rng rng(1);
    const std::size_t d = 64;
    Tensor x = rand_tensor({static_cast<std::size_t>(state.range(0)), d}, rng, true);
    Tensor scale_t = rand_tensor({d}, rng, true);
    Tensor offset = rand_tensor({d}, rng, true);
    for (auto _ : state) {
        BatchNormState st = BatchNormState::init(d);
        Tensor y = batch_norm(x, scale_t, offset, st, NetMode::kTrain);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_batch_norm_train)->Arg(8)->Arg(64);
