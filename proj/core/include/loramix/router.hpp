#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "loramix/lora.hpp"
#include "loramix/model.hpp"

namespace loramix {

/// Mean context embedding of an adapter's training corpus.
struct Centroid {
    std::string adapter_name;
    VecF vector;
    long long sample_count = 0;
};

struct RouterConfig {
    double base_temperature = 1.0;
    double boost_temperature = 4.0;  // applied to the most similar adapter
    int stride = 2;                  // tokens between re-merges
    enum class Context { FullContext, PromptOnly };
    Context routing_context = Context::FullContext;

    void validate() const {
        if (!(base_temperature > 0)) throw ConfigError("base_temperature must be positive");
        if (boost_temperature < base_temperature)
            throw ConfigError("boost_temperature must be >= base_temperature");
        if (stride < 1) throw ConfigError("stride must be >= 1");
    }
};

struct TraceStep {
    int position = 0;  // generation index, 0-based
    std::vector<double> similarities;
    std::vector<double> weights;
    int argmax = 0;
    std::string argmax_name;
    bool merged = false;
};

struct RoutingTrace {
    std::vector<TraceStep> steps;
};

/// Boosted softmax over cosine similarities: the most similar adapter's
/// logit is s * boost_temperature, all others s * base_temperature.
/// Ties break to the lowest index. Computed in 64-bit.
std::vector<double> compute_weights(const std::vector<double>& similarities, const RouterConfig& config);

Centroid compute_centroid(const Model& model, const std::vector<TokenSeq>& corpus, std::string adapter_name);

struct RouteStepResult {
    MergedDelta delta;
    TraceStep step;
};

RouteStepResult route_step(const Model& model, const std::vector<LoraAdapter>& adapters,
                           const std::vector<Centroid>& centroids, const TokenSeq& context,
                           const RouterConfig& config);

struct GenerateOptions {
    int max_new_tokens = 16;
    std::optional<int> eos_token = tok::kEos;
    bool greedy = true;
    double temperature = 1.0;  // sampled mode only
    std::uint64_t seed = 0;    // sampled mode only
};

struct GenerateResult {
    TokenSeq generated;
    RoutingTrace trace;
};

/// Autoregressive generation with stride-k re-adaptation: the expert delta
/// is recomputed before token 0 and before every token whose generation
/// index is a multiple of the stride; intermediate tokens reuse it.
/// With no adapters registered, runs the plain base model (empty trace).
GenerateResult generate(const Model& model, const std::vector<LoraAdapter>& adapters,
                        const std::vector<Centroid>& centroids, const TokenSeq& prompt,
                        const RouterConfig& config, const GenerateOptions& opts);

/// Generation under a fixed delta (or the plain base when null).
TokenSeq generate_static(const Model& model, const MergedDelta* delta, const TokenSeq& prompt,
                         const GenerateOptions& opts);

void write_trace_jsonl(const RoutingTrace& trace, std::ostream& out);
RoutingTrace read_trace_jsonl(std::istream& in);

}  // namespace loramix
