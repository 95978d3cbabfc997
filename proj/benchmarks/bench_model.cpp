#include <benchmark/benchmark.h>

#include <random>

#include "loramix/router.hpp"
#include "loramix/tokenizer.hpp"

using namespace loramix;

namespace {

ModelConfig bench_config() {
    ModelConfig c;  // library defaults: d_model 64, 2 layers, 4 heads
    c.lora_targets = default_lora_targets(c.n_layers);
    return c;
}

LoraAdapter bench_adapter(const Model& model, const std::string& name, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> uni(-0.05f, 0.05f);
    LoraAdapter a;
    a.name = name;
    a.rank = 4;
    a.alpha = 8.0;
    for (const std::string& role : model.config.lora_targets) {
        const MatF& w = model.param(role);
        LoraFactors<float> f;
        f.a = MatF(a.rank, w.cols);
        f.b = MatF(w.rows, a.rank);
        for (float& x : f.a.data) x = uni(rng);
        for (float& x : f.b.data) x = uni(rng);
        a.targets.emplace(role, std::move(f));
    }
    return a;
}

void BM_forward(benchmark::State& state) {
    const Model m = make_model<float>(bench_config(), 1);
    TokenSeq t(static_cast<std::size_t>(state.range(0)));
    std::mt19937_64 rng(2);
    for (int& id : t) id = static_cast<int>(rng() % m.config.vocab_size);
    for (auto _ : state) {
        MatF logits = forward(m, nullptr, t);
        benchmark::DoNotOptimize(logits.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_forward)->Arg(8)->Arg(32)->Arg(128);

void BM_route_step(benchmark::State& state) {
    const Model m = make_model<float>(bench_config(), 3);
    std::vector<LoraAdapter> adapters;
    std::vector<Centroid> centroids;
    for (int j = 0; j < 4; ++j) {
        adapters.push_back(bench_adapter(m, "a" + std::to_string(j), 10 + j));
        TokenSeq doc(12);
        std::mt19937_64 rng(20 + j);
        for (int& id : doc) id = static_cast<int>(rng() % m.config.vocab_size);
        centroids.push_back(compute_centroid(m, {doc}, adapters.back().name));
    }
    const TokenSeq ctx = tok::encode("copy: abcd=");
    for (auto _ : state) {
        RouteStepResult rs = route_step(m, adapters, centroids, ctx, RouterConfig{});
        benchmark::DoNotOptimize(&rs.delta.targets);
    }
}
BENCHMARK(BM_route_step);

void BM_generate_routed(benchmark::State& state) {
    const Model m = make_model<float>(bench_config(), 3);
    std::vector<LoraAdapter> adapters;
    std::vector<Centroid> centroids;
    for (int j = 0; j < 4; ++j) {
        adapters.push_back(bench_adapter(m, "a" + std::to_string(j), 10 + j));
        TokenSeq doc(12);
        std::mt19937_64 rng(20 + j);
        for (int& id : doc) id = static_cast<int>(rng() % m.config.vocab_size);
        centroids.push_back(compute_centroid(m, {doc}, adapters.back().name));
    }
    const TokenSeq prompt = tok::encode("copy: abcd=");
    RouterConfig cfg;
    cfg.stride = static_cast<int>(state.range(0));
    GenerateOptions opts;
    opts.max_new_tokens = 8;
    opts.eos_token.reset();
    for (auto _ : state) {
        GenerateResult r = generate(m, adapters, centroids, prompt, cfg, opts);
        benchmark::DoNotOptimize(r.generated.data());
    }
    state.SetItemsProcessed(state.iterations() * opts.max_new_tokens);
}
BENCHMARK(BM_generate_routed)->Arg(1)->Arg(2)->Arg(4);

}  // namespace
