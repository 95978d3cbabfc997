#include "loramix/router.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

namespace loramix {

std::vector<double> compute_weights(const std::vector<double>& similarities, const RouterConfig& config) {
    config.validate();
    if (similarities.empty()) throw ShapeError("empty similarity vector");
    std::size_t best = 0;
    for (std::size_t j = 1; j < similarities.size(); ++j)
        if (similarities[j] > similarities[best]) best = j;

    std::vector<double> logits(similarities.size());
    for (std::size_t j = 0; j < similarities.size(); ++j)
        logits[j] = similarities[j] * (j == best ? config.boost_temperature : config.base_temperature);

    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double sum = 0.0;
    for (double& x : logits) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : logits) x /= sum;
    return logits;
}

Centroid compute_centroid(const Model& model, const std::vector<TokenSeq>& corpus, std::string adapter_name) {
    if (corpus.empty()) throw EmptyCorpusError("centroid corpus is empty");
    const int d = model.config.d_model;
    VecD acc(d, 0.0);
    for (const TokenSeq& seq : corpus) {
        VecF e = embed_context(model, seq);
        for (int j = 0; j < d; ++j) acc[j] += static_cast<double>(e[j]);
    }
    Centroid c;
    c.adapter_name = std::move(adapter_name);
    c.sample_count = static_cast<long long>(corpus.size());
    c.vector.resize(d);
    double norm = 0.0;
    for (int j = 0; j < d; ++j) {
        c.vector[j] = static_cast<float>(acc[j] / static_cast<double>(corpus.size()));
        norm += static_cast<double>(c.vector[j]) * static_cast<double>(c.vector[j]);
    }
    if (norm == 0.0) throw DegenerateEmbeddingError("centroid has zero norm");
    return c;
}

RouteStepResult route_step(const Model& model, const std::vector<LoraAdapter>& adapters,
                           const std::vector<Centroid>& centroids, const TokenSeq& context,
                           const RouterConfig& config) {
    if (adapters.empty()) throw RegistryError("no adapters registered");
    if (adapters.size() != centroids.size())
        throw RegistryError("adapter/centroid count mismatch: " + std::to_string(adapters.size()) + " vs " +
                            std::to_string(centroids.size()));
    for (std::size_t i = 0; i < adapters.size(); ++i)
        if (adapters[i].name != centroids[i].adapter_name)
            throw RegistryError("adapter '" + adapters[i].name + "' is paired with centroid '" +
                                centroids[i].adapter_name + "'");

    const VecF emb = embed_context(model, context);
    RouteStepResult out;
    out.step.similarities.resize(adapters.size());
    for (std::size_t i = 0; i < adapters.size(); ++i)
        out.step.similarities[i] = cosine_similarity(emb, centroids[i].vector);
    out.step.weights = compute_weights(out.step.similarities, config);
    out.step.argmax = 0;
    for (std::size_t i = 1; i < out.step.similarities.size(); ++i)
        if (out.step.similarities[i] > out.step.similarities[out.step.argmax])
            out.step.argmax = static_cast<int>(i);
    out.step.argmax_name = adapters[out.step.argmax].name;
    out.delta = merge_adapters(adapters, out.step.weights);
    return out;
}

namespace {

int pick_token(std::span<const float> row, const GenerateOptions& opts, int step) {
    if (opts.greedy) return next_token_greedy(row);
    return next_token_sampled(row, opts.temperature, derive_seed(opts.seed, "sample/" + std::to_string(step)));
}

}  // namespace

TokenSeq generate_static(const Model& model, const MergedDelta* delta, const TokenSeq& prompt,
                         const GenerateOptions& opts) {
    if (prompt.empty()) throw ShapeError("empty prompt");
    if (opts.max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
    TokenSeq ctx = prompt;
    TokenSeq out;
    for (int g = 0; g < opts.max_new_tokens; ++g) {
        if (static_cast<int>(ctx.size()) >= model.config.max_seq_len) break;
        MatF logits = forward(model, delta, ctx);
        int tokid = pick_token(logits.row(logits.rows - 1), opts, g);
        out.push_back(tokid);
        ctx.push_back(tokid);
        if (opts.eos_token && tokid == *opts.eos_token) break;
    }
    return out;
}

GenerateResult generate(const Model& model, const std::vector<LoraAdapter>& adapters,
                        const std::vector<Centroid>& centroids, const TokenSeq& prompt,
                        const RouterConfig& config, const GenerateOptions& opts) {
    if (prompt.empty()) throw ShapeError("empty prompt");
    if (opts.max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
    config.validate();

    GenerateResult res;
    if (adapters.empty()) {
        res.generated = generate_static(model, nullptr, prompt, opts);
        return res;
    }

    TokenSeq ctx = prompt;
    MergedDelta delta;
    TraceStep last;
    for (int g = 0; g < opts.max_new_tokens; ++g) {
        if (static_cast<int>(ctx.size()) >= model.config.max_seq_len) break;
        const bool merge_now = (g % config.stride) == 0;
        if (merge_now) {
            const TokenSeq& routing_ctx =
                config.routing_context == RouterConfig::Context::PromptOnly ? prompt : ctx;
            RouteStepResult rs = route_step(model, adapters, centroids, routing_ctx, config);
            delta = std::move(rs.delta);
            last = std::move(rs.step);
        }
        TraceStep step = last;
        step.position = g;
        step.merged = merge_now;
        res.trace.steps.push_back(std::move(step));

        MatF logits = forward(model, &delta, ctx);
        int tokid = pick_token(logits.row(logits.rows - 1), opts, g);
        res.generated.push_back(tokid);
        ctx.push_back(tokid);
        if (opts.eos_token && tokid == *opts.eos_token) break;
    }
    return res;
}

void write_trace_jsonl(const RoutingTrace& trace, std::ostream& out) {
    for (const TraceStep& s : trace.steps) {
        nlohmann::json j;
        j["position"] = s.position;
        j["similarities"] = s.similarities;
        j["weights"] = s.weights;
        j["argmax"] = s.argmax;
        j["argmax_name"] = s.argmax_name;
        j["merged"] = s.merged;
        out << j.dump() << "\n";
    }
}

RoutingTrace read_trace_jsonl(std::istream& in) {
    RoutingTrace trace;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw FormatError("malformed trace record at line " + std::to_string(lineno));
        TraceStep s;
        s.position = j.at("position").get<int>();
        s.similarities = j.at("similarities").get<std::vector<double>>();
        s.weights = j.at("weights").get<std::vector<double>>();
        s.argmax = j.at("argmax").get<int>();
        s.argmax_name = j.at("argmax_name").get<std::string>();
        s.merged = j.at("merged").get<bool>();
        trace.steps.push_back(std::move(s));
    }
    return trace;
}

}  // namespace loramix
