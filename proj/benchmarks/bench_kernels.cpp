#include <benchmark/benchmark.h>

#include <random>

#include "loramix/lora.hpp"
#include "loramix/tensor.hpp"

using namespace loramix;

namespace {

MatF random_mat(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
    MatF m(rows, cols);
    for (float& x : m.data) x = uni(rng);
    return m;
}

LoraAdapter random_adapter(int d, int rank, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> uni(-0.1f, 0.1f);
    LoraAdapter a;
    a.name = "bench" + std::to_string(seed);
    a.rank = rank;
    a.alpha = 2.0 * rank;
    for (const std::string role : {"blk0.attn.wq", "blk0.attn.wv"}) {
        LoraFactors<float> f;
        f.a = MatF(rank, d);
        f.b = MatF(d, rank);
        for (float& x : f.a.data) x = uni(rng);
        for (float& x : f.b.data) x = uni(rng);
        a.targets.emplace(role, std::move(f));
    }
    return a;
}

void BM_matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const MatF a = random_mat(n, n, 1);
    const MatF b = random_mat(n, n, 2);
    for (auto _ : state) {
        MatF c = matmul(a, b);
        benchmark::DoNotOptimize(c.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}
BENCHMARK(BM_matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_softmax(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> uni(-4.0f, 4.0f);
    VecF v(static_cast<std::size_t>(n));
    for (float& x : v) x = uni(rng);
    for (auto _ : state) {
        VecF w = softmax_row(v);
        benchmark::DoNotOptimize(w.data());
    }
}
BENCHMARK(BM_softmax)->Arg(96)->Arg(1024);

void BM_merge_adapters(benchmark::State& state) {
    const int d = 64;
    const int rank = static_cast<int>(state.range(0));
    std::vector<LoraAdapter> adapters;
    for (int j = 0; j < 4; ++j) adapters.push_back(random_adapter(d, rank, 10 + j));
    const std::vector<double> w{0.4, 0.3, 0.2, 0.1};
    for (auto _ : state) {
        MergedDelta m = merge_adapters(adapters, w);
        benchmark::DoNotOptimize(&m.targets);
    }
}
BENCHMARK(BM_merge_adapters)->Arg(2)->Arg(4)->Arg(8);

void BM_cosine_similarity(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
    VecF u(64), v(64);
    for (float& x : u) x = uni(rng);
    for (float& x : v) x = uni(rng);
    for (auto _ : state) {
        double s = cosine_similarity(u, v);
        benchmark::DoNotOptimize(s);
    }
}
BENCHMARK(BM_cosine_similarity);

}  // namespace

BENCHMARK_MAIN();
