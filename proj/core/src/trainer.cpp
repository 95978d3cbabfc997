#include "loramix/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace loramix {

namespace {

/// Cycles through a seeded shuffle of the corpus, reshuffling per epoch.
class BatchSampler {
public:
    BatchSampler(std::size_t corpus_size, std::uint64_t seed) : rng_(seed), order_(corpus_size) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::shuffle(order_.begin(), order_.end(), rng_);
    }

    std::vector<std::size_t> next(std::size_t batch_size) {
        std::vector<std::size_t> batch;
        batch.reserve(batch_size);
        while (batch.size() < batch_size) {
            if (cursor_ == order_.size()) {
                std::shuffle(order_.begin(), order_.end(), rng_);
                cursor_ = 0;
            }
            batch.push_back(order_[cursor_++]);
        }
        return batch;
    }

private:
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

void check_corpus(const std::vector<TokenSeq>& corpus) {
    if (corpus.empty()) throw EmptyCorpusError("training corpus is empty");
    for (const TokenSeq& s : corpus)
        if (s.size() < 2) throw InsufficientContextError("training sequence shorter than 2 tokens");
}

}  // namespace

LoraAdapter init_adapter(const Model& model, const TrainConfig& cfg, const std::string& name) {
    cfg.validate();
    std::vector<std::string> targets = cfg.targets.empty() ? model.config.lora_targets : cfg.targets;
    if (targets.empty()) throw ConfigError("no LoRA targets configured");

    LoraAdapter adapter;
    adapter.name = name;
    adapter.rank = cfg.rank;
    adapter.alpha = cfg.alpha;

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> uni(-0.01, 0.01);
    std::sort(targets.begin(), targets.end());
    for (const std::string& role : targets) {
        const MatF& w = model.param(role);
        LoraFactors<float> f;
        f.a = MatF(cfg.rank, w.cols);
        f.b = MatF(w.rows, cfg.rank);
        for (float& x : f.a.data) x = static_cast<float>(uni(rng));
        adapter.targets.emplace(role, std::move(f));
    }
    adapter.validate();
    return adapter;
}

LoraAdapter train_adapter(const Model& model, const std::vector<TokenSeq>& corpus, const TrainConfig& cfg,
                          const std::string& name, std::ostream* loss_log) {
    check_corpus(corpus);
    LoraAdapter adapter = init_adapter(model, cfg, name);

    BatchSampler sampler(corpus.size(), derive_seed(cfg.seed, "batch"));
    const float lr = static_cast<float>(cfg.learning_rate);
    std::vector<TokenSeq> batch;
    for (int step = 0; step < cfg.steps; ++step) {
        batch.clear();
        for (std::size_t idx : sampler.next(static_cast<std::size_t>(cfg.batch_size))) batch.push_back(corpus[idx]);
        AdapterGrads<float> g = lora_gradients(model, adapter, batch);
        if (!std::isfinite(g.loss))
            throw DivergenceError("non-finite loss at step " + std::to_string(step));
        for (auto& [role, f] : adapter.targets) {
            const LoraFactors<float>& fg = g.factors.at(role);
            for (std::size_t i = 0; i < f.a.data.size(); ++i) f.a.data[i] -= lr * fg.a.data[i];
            for (std::size_t i = 0; i < f.b.data.size(); ++i) f.b.data[i] -= lr * fg.b.data[i];
        }
        if (loss_log) (*loss_log) << step << " " << g.loss << "\n";
    }
    return adapter;
}

void pretrain_base(Model& model, const std::vector<TokenSeq>& corpus, const PretrainConfig& cfg,
                   std::ostream* loss_log) {
    check_corpus(corpus);
    model.validate();
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(cfg.learning_rate > 0)) throw ConfigError("learning_rate must be positive");

    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::map<std::string, MatF> m1, m2;
    for (const auto& [name, w] : model.params) {
        m1.emplace(name, MatF(w.rows, w.cols));
        m2.emplace(name, MatF(w.rows, w.cols));
    }

    BatchSampler sampler(corpus.size(), derive_seed(cfg.seed, "batch"));
    for (int step = 0; step < cfg.steps; ++step) {
        std::map<std::string, MatF> grads;
        double loss = 0.0;
        const auto batch = sampler.next(static_cast<std::size_t>(cfg.batch_size));
        for (std::size_t idx : batch) loss += nll_and_grad(model, nullptr, corpus[idx], grads);
        loss /= static_cast<double>(batch.size());
        if (!std::isfinite(loss)) throw DivergenceError("non-finite loss at step " + std::to_string(step));

        const double t = step + 1;
        const double corr1 = 1.0 - std::pow(beta1, t);
        const double corr2 = 1.0 - std::pow(beta2, t);
        const float inv_b = 1.0f / static_cast<float>(batch.size());
        for (auto& [name, w] : model.params) {
            auto git = grads.find(name);
            if (git == grads.end()) continue;
            MatF& g = git->second;
            MatF& mm = m1.at(name);
            MatF& vv = m2.at(name);
            for (std::size_t i = 0; i < w.data.size(); ++i) {
                const double gi = static_cast<double>(g.data[i] * inv_b);
                mm.data[i] = static_cast<float>(beta1 * mm.data[i] + (1.0 - beta1) * gi);
                vv.data[i] = static_cast<float>(beta2 * vv.data[i] + (1.0 - beta2) * gi * gi);
                const double mhat = mm.data[i] / corr1;
                const double vhat = vv.data[i] / corr2;
                w.data[i] -= static_cast<float>(cfg.learning_rate * mhat / (std::sqrt(vhat) + adam_eps));
            }
        }
        if (loss_log && (step % 50 == 0 || step + 1 == cfg.steps)) (*loss_log) << step << " " << loss << "\n";
    }
}

}  // namespace loramix
