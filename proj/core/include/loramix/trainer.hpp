#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "loramix/grad.hpp"
#include "loramix/lora.hpp"
#include "loramix/model.hpp"

namespace loramix {

struct TrainConfig {
    double learning_rate = 0.2;
    int steps = 400;
    int batch_size = 8;
    std::uint64_t seed = 1;
    int rank = 4;
    double alpha = 8.0;
    std::vector<std::string> targets;  // parameter names; defaults to the model's lora_targets

    void validate() const {
        if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
        if (steps < 0) throw ConfigError("steps must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (rank < 1) throw ConfigError("rank must be >= 1");
    }
};

template <class T>
struct AdapterGrads {
    double loss = 0.0;
    std::map<std::string, LoraFactors<T>> factors;
};

/// Analytic gradients of the batch-mean NLL with respect to the adapter's
/// low-rank factors. Base parameters receive no update; the chain rule
/// through delta = (alpha/rank) * B * A gives
///   dA = scale * B^T * G,   dB = scale * G * A^T,
/// where G is the gradient with respect to the targeted effective weight.
template <class T>
AdapterGrads<T> lora_gradients(const ModelT<T>& model, const LoraAdapterT<T>& adapter,
                               const std::vector<TokenSeq>& batch) {
    if (batch.empty()) throw EmptyCorpusError("empty gradient batch");
    adapter.validate();
    const MergedDeltaT<T> delta = single_adapter_delta(adapter);

    std::map<std::string, Mat<T>> grads;
    double loss = 0.0;
    for (const TokenSeq& seq : batch) loss += nll_and_grad(model, &delta, seq, grads);
    loss /= static_cast<double>(batch.size());
    const T inv_b = static_cast<T>(1.0 / static_cast<double>(batch.size()));

    AdapterGrads<T> out;
    out.loss = loss;
    const T scale = static_cast<T>(adapter.alpha / static_cast<double>(adapter.rank));
    for (const auto& [role, f] : adapter.targets) {
        auto it = grads.find(role);
        Mat<T> g = it != grads.end() ? it->second : Mat<T>(f.b.rows, f.a.cols);
        for (T& x : g.data) x *= inv_b;
        LoraFactors<T> fg;
        fg.a = matmul(transpose(f.b), g);  // rank x d_in
        fg.b = matmul(g, transpose(f.a));  // d_out x rank
        for (T& x : fg.a.data) x *= scale;
        for (T& x : fg.b.data) x *= scale;
        out.factors.emplace(role, std::move(fg));
    }
    return out;
}

/// Seeded adapter initialization: A ~ uniform(-0.01, 0.01), B = 0, so the
/// initial delta is exactly zero and step 0 matches the base model.
LoraAdapter init_adapter(const Model& model, const TrainConfig& cfg, const std::string& name);

/// Plain SGD on the LoRA factors against the NLL objective; the base model
/// stays frozen. Deterministic given the config seed.
LoraAdapter train_adapter(const Model& model, const std::vector<TokenSeq>& corpus, const TrainConfig& cfg,
                          const std::string& name, std::ostream* loss_log = nullptr);

struct PretrainConfig {
    double learning_rate = 1e-3;
    int steps = 600;
    int batch_size = 16;
    std::uint64_t seed = 7;
};

/// Full-parameter Adam training of the base model on a token corpus.
/// Used to provision a base checkpoint; adapters never touch base weights.
void pretrain_base(Model& model, const std::vector<TokenSeq>& corpus, const PretrainConfig& cfg,
                   std::ostream* loss_log = nullptr);

}  // namespace loramix
