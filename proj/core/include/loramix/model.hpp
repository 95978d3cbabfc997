#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <type_traits>
#include <vector>

#include "loramix/common.hpp"
#include "loramix/lora.hpp"
#include "loramix/tensor.hpp"
#include "loramix/tokenizer.hpp"

namespace loramix {

inline constexpr double kLayerNormEps = 1e-5;

struct ModelConfig {
    int vocab_size = tok::kVocabSize;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int max_seq_len = 128;
    std::vector<std::string> lora_targets;  // concrete parameter names

    void validate() const {
        if (vocab_size < 2) throw ShapeError("vocab_size must be >= 2");
        if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1) throw ShapeError("bad model dimension");
        if (d_model % n_heads != 0) throw ShapeError("d_model must be divisible by n_heads");
        if (max_seq_len < 1) throw ShapeError("max_seq_len must be >= 1");
        if (lora_targets.empty()) throw ShapeError("lora_targets must be nonempty");
    }
};

/// Attention query and value projections in every layer.
inline std::vector<std::string> default_lora_targets(int n_layers) {
    std::vector<std::string> out;
    for (int l = 0; l < n_layers; ++l) {
        out.push_back("blk" + std::to_string(l) + ".attn.wq");
        out.push_back("blk" + std::to_string(l) + ".attn.wv");
    }
    return out;
}

/// Canonical parameter list: (name, rows, cols). Vectors are stored as
/// 1-row matrices so one container covers everything.
inline std::vector<std::pair<std::string, std::pair<int, int>>> param_shapes(const ModelConfig& c) {
    std::vector<std::pair<std::string, std::pair<int, int>>> out;
    out.push_back({"tok_emb", {c.vocab_size, c.d_model}});
    out.push_back({"pos_emb", {c.max_seq_len, c.d_model}});
    for (int l = 0; l < c.n_layers; ++l) {
        std::string p = "blk" + std::to_string(l) + ".";
        out.push_back({p + "ln1.g", {1, c.d_model}});
        out.push_back({p + "ln1.b", {1, c.d_model}});
        out.push_back({p + "attn.wq", {c.d_model, c.d_model}});
        out.push_back({p + "attn.wk", {c.d_model, c.d_model}});
        out.push_back({p + "attn.wv", {c.d_model, c.d_model}});
        out.push_back({p + "attn.wo", {c.d_model, c.d_model}});
        out.push_back({p + "ln2.g", {1, c.d_model}});
        out.push_back({p + "ln2.b", {1, c.d_model}});
        out.push_back({p + "mlp.w1", {c.d_ff, c.d_model}});
        out.push_back({p + "mlp.b1", {1, c.d_ff}});
        out.push_back({p + "mlp.w2", {c.d_model, c.d_ff}});
        out.push_back({p + "mlp.b2", {1, c.d_model}});
    }
    out.push_back({"ln_f.g", {1, c.d_model}});
    out.push_back({"ln_f.b", {1, c.d_model}});
    out.push_back({"head", {c.vocab_size, c.d_model}});
    return out;
}

template <class T>
struct ModelT {
    ModelConfig config;
    std::map<std::string, Mat<T>> params;

    const Mat<T>& param(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw MissingTargetError("model has no parameter '" + name + "'");
        return it->second;
    }

    void validate() const {
        config.validate();
        for (const auto& [name, shape] : param_shapes(config)) {
            const Mat<T>& m = param(name);
            if (m.rows != shape.first || m.cols != shape.second)
                throw ShapeError("parameter '" + name + "' has shape " + std::to_string(m.rows) + "x" +
                                 std::to_string(m.cols));
        }
        for (const std::string& t : config.lora_targets) (void)param(t);
    }
};

using Model = ModelT<float>;

template <class T>
ModelT<T> make_model(const ModelConfig& cfg_in, std::uint64_t seed) {
    ModelConfig cfg = cfg_in;
    if (cfg.lora_targets.empty()) cfg.lora_targets = default_lora_targets(cfg.n_layers);
    cfg.validate();
    ModelT<T> m;
    m.config = cfg;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.08);
    for (const auto& [name, shape] : param_shapes(cfg)) {
        Mat<T> w(shape.first, shape.second);
        const bool is_gain = name.ends_with(".g");
        const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2");
        if (is_gain) {
            std::fill(w.data.begin(), w.data.end(), T(1));
        } else if (!is_bias) {
            for (T& x : w.data) x = static_cast<T>(gauss(rng));
        }
        m.params.emplace(name, std::move(w));
    }
    return m;
}

template <class T2, class T>
ModelT<T2> cast_model(const ModelT<T>& m) {
    ModelT<T2> out;
    out.config = m.config;
    for (const auto& [name, w] : m.params) {
        Mat<T2> c(w.rows, w.cols);
        for (std::size_t i = 0; i < w.data.size(); ++i) c.data[i] = static_cast<T2>(w.data[i]);
        out.params.emplace(name, std::move(c));
    }
    return out;
}

namespace detail {

/// Weight lookup with per-target additive deltas resolved up front.
template <class T>
struct EffWeights {
    const ModelT<T>* model = nullptr;
    std::map<std::string, Mat<T>> patched;

    EffWeights(const ModelT<T>& m, const MergedDeltaT<T>* delta) : model(&m) {
        if (!delta) return;
        for (const auto& [role, dw] : delta->targets) {
            const Mat<T>& base = m.param(role);
            if (!base.same_shape(dw))
                throw ShapeError("delta for '" + role + "' has shape " + std::to_string(dw.rows) + "x" +
                                 std::to_string(dw.cols) + ", expected " + std::to_string(base.rows) + "x" +
                                 std::to_string(base.cols));
            Mat<T> sum = base;
            for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += dw.data[i];
            patched.emplace(role, std::move(sum));
        }
    }

    const Mat<T>& get(const std::string& name) const {
        auto it = patched.find(name);
        if (it != patched.end()) return it->second;
        return model->param(name);
    }
};

/// y = x * w^T (+ bias), x: n x d_in, w: d_out x d_in, bias: 1 x d_out.
template <class T>
Mat<T> linear(const Mat<T>& x, const Mat<T>& w, const Mat<T>* bias) {
    if (x.cols != w.cols) throw ShapeError("linear shape mismatch");
    Mat<T> y(x.rows, w.rows);
    for (int i = 0; i < x.rows; ++i) {
        const T* xi = x.data.data() + static_cast<std::size_t>(i) * x.cols;
        for (int o = 0; o < w.rows; ++o) {
            const T* wo = w.data.data() + static_cast<std::size_t>(o) * w.cols;
            T acc = bias ? bias->data[o] : T(0);
            for (int k = 0; k < x.cols; ++k) acc += xi[k] * wo[k];
            y(i, o) = acc;
        }
    }
    return y;
}

/// Row-wise layernorm keeping the normalized rows and reciprocal stddevs
/// for the backward pass.
template <class T>
Mat<T> layernorm_rows(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias, Mat<T>& xhat, std::vector<T>& rstd) {
    const int n = x.rows, d = x.cols;
    xhat = Mat<T>(n, d);
    rstd.assign(n, T(0));
    Mat<T> y(n, d);
    for (int i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += static_cast<double>(x(i, j));
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double dd = static_cast<double>(x(i, j)) - mean;
            var += dd * dd;
        }
        var /= d;
        const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
        rstd[i] = static_cast<T>(rs);
        for (int j = 0; j < d; ++j) {
            T xh = static_cast<T>((static_cast<double>(x(i, j)) - mean) * rs);
            xhat(i, j) = xh;
            y(i, j) = xh * gain.data[j] + bias.data[j];
        }
    }
    return y;
}

}  // namespace detail

template <class T>
struct LayerCache {
    Mat<T> x_in;                     // block input, n x d
    Mat<T> ln1_xhat;                 // n x d
    std::vector<T> ln1_rstd;         // n
    Mat<T> a1, q, k, v;              // n x d
    std::vector<Mat<T>> attn_probs;  // per head, n x n (rows causal)
    Mat<T> attn_concat;              // n x d, head outputs before wo
    Mat<T> h_attn;                   // after attention residual
    Mat<T> ln2_xhat;
    std::vector<T> ln2_rstd;
    Mat<T> a2;       // post-ln2
    Mat<T> mlp_pre;  // n x d_ff, pre-activation
    Mat<T> mlp_act;  // n x d_ff, relu
    Mat<T> h_out;    // block output
};

template <class T>
struct ForwardCache {
    Mat<T> x0;  // embeddings
    std::vector<LayerCache<T>> layers;
    Mat<T> lnf_xhat;
    std::vector<T> lnf_rstd;
    Mat<T> final_norm;
    Mat<T> logits;
};

template <class T>
void check_tokens(const ModelT<T>& m, const TokenSeq& tokens) {
    if (tokens.empty()) throw ShapeError("empty token sequence");
    if (static_cast<int>(tokens.size()) > m.config.max_seq_len)
        throw LengthError("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                          std::to_string(m.config.max_seq_len));
    for (int id : tokens)
        if (id < 0 || id >= m.config.vocab_size)
            throw ShapeError("token id " + std::to_string(id) + " out of range");
}

/// Full causal forward pass. With a delta present each targeted layer
/// computes (W + dW) x; everything else is the frozen base.
template <class T>
const Mat<T>& forward_cached(const ModelT<T>& m, std::type_identity_t<const MergedDeltaT<T>*> delta, const TokenSeq& tokens,
                             ForwardCache<T>& cache) {
    check_tokens(m, tokens);
    const detail::EffWeights<T> w(m, delta);
    const ModelConfig& c = m.config;
    const int n = static_cast<int>(tokens.size());
    const int d = c.d_model, nh = c.n_heads, dh = d / nh;
    const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    const Mat<T>& tok_emb = m.param("tok_emb");
    const Mat<T>& pos_emb = m.param("pos_emb");
    cache.x0 = Mat<T>(n, d);
    for (int i = 0; i < n; ++i) {
        auto te = tok_emb.row(tokens[i]);
        auto pe = pos_emb.row(i);
        for (int j = 0; j < d; ++j) cache.x0(i, j) = te[j] + pe[j];
    }

    cache.layers.assign(c.n_layers, LayerCache<T>{});
    Mat<T> x = cache.x0;
    for (int l = 0; l < c.n_layers; ++l) {
        LayerCache<T>& lc = cache.layers[l];
        const std::string p = "blk" + std::to_string(l) + ".";
        lc.x_in = x;

        lc.a1 = detail::layernorm_rows(x, m.param(p + "ln1.g"), m.param(p + "ln1.b"), lc.ln1_xhat, lc.ln1_rstd);
        lc.q = detail::linear<T>(lc.a1, w.get(p + "attn.wq"), nullptr);
        lc.k = detail::linear<T>(lc.a1, w.get(p + "attn.wk"), nullptr);
        lc.v = detail::linear<T>(lc.a1, w.get(p + "attn.wv"), nullptr);

        lc.attn_probs.assign(nh, Mat<T>(n, n));
        lc.attn_concat = Mat<T>(n, d);
        std::vector<T> scores;
        for (int h = 0; h < nh; ++h) {
            Mat<T>& probs = lc.attn_probs[h];
            const int off = h * dh;
            for (int i = 0; i < n; ++i) {
                scores.assign(static_cast<std::size_t>(i) + 1, T(0));
                for (int j = 0; j <= i; ++j) {
                    T acc = T(0);
                    for (int t = 0; t < dh; ++t) acc += lc.q(i, off + t) * lc.k(j, off + t);
                    scores[j] = acc * att_scale;
                }
                softmax_inplace(std::span<T>(scores));
                for (int j = 0; j <= i; ++j) probs(i, j) = scores[j];
                for (int t = 0; t < dh; ++t) {
                    T acc = T(0);
                    for (int j = 0; j <= i; ++j) acc += probs(i, j) * lc.v(j, off + t);
                    lc.attn_concat(i, off + t) = acc;
                }
            }
        }

        Mat<T> attn_out = detail::linear<T>(lc.attn_concat, w.get(p + "attn.wo"), nullptr);
        lc.h_attn = x;
        for (std::size_t i = 0; i < lc.h_attn.data.size(); ++i) lc.h_attn.data[i] += attn_out.data[i];

        lc.a2 = detail::layernorm_rows(lc.h_attn, m.param(p + "ln2.g"), m.param(p + "ln2.b"), lc.ln2_xhat,
                                       lc.ln2_rstd);
        lc.mlp_pre = detail::linear(lc.a2, w.get(p + "mlp.w1"), &m.param(p + "mlp.b1"));
        lc.mlp_act = lc.mlp_pre;
        for (T& v2 : lc.mlp_act.data)
            if (v2 < T(0)) v2 = T(0);
        Mat<T> mlp_out = detail::linear(lc.mlp_act, w.get(p + "mlp.w2"), &m.param(p + "mlp.b2"));
        lc.h_out = lc.h_attn;
        for (std::size_t i = 0; i < lc.h_out.data.size(); ++i) lc.h_out.data[i] += mlp_out.data[i];
        x = lc.h_out;
    }

    cache.final_norm = detail::layernorm_rows(x, m.param("ln_f.g"), m.param("ln_f.b"), cache.lnf_xhat, cache.lnf_rstd);
    cache.logits = detail::linear<T>(cache.final_norm, w.get("head"), nullptr);
    return cache.logits;
}

template <class T>
Mat<T> forward(const ModelT<T>& m, std::type_identity_t<const MergedDeltaT<T>*> delta, const TokenSeq& tokens) {
    ForwardCache<T> cache;
    forward_cached(m, delta, tokens, cache);
    return std::move(cache.logits);
}

/// Mean over positions of the input embedding (token + positional),
/// the context vector routed against dataset centroids.
template <class T>
Vec<T> embed_context(const ModelT<T>& m, const TokenSeq& tokens) {
    if (tokens.empty()) throw DegenerateEmbeddingError("cannot embed an empty context");
    check_tokens(m, tokens);
    const Mat<T>& tok_emb = m.param("tok_emb");
    const Mat<T>& pos_emb = m.param("pos_emb");
    const int d = m.config.d_model;
    Vec<double> acc(d, 0.0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto te = tok_emb.row(tokens[i]);
        auto pe = pos_emb.row(static_cast<int>(i));
        for (int j = 0; j < d; ++j) acc[j] += static_cast<double>(te[j]) + static_cast<double>(pe[j]);
    }
    Vec<T> out(d);
    for (int j = 0; j < d; ++j) out[j] = static_cast<T>(acc[j] / static_cast<double>(tokens.size()));
    return out;
}

template <class T>
double nll_from_logits(const Mat<T>& logits, const TokenSeq& tokens) {
    const int n = static_cast<int>(tokens.size());
    if (n < 2) throw InsufficientContextError("need at least 2 tokens to compute a loss");
    double total = 0.0;
    for (int t = 0; t + 1 < n; ++t) {
        auto row = logits.row(t);
        double mx = static_cast<double>(row[0]);
        for (T x : row) mx = std::max(mx, static_cast<double>(x));
        double sum = 0.0;
        for (T x : row) sum += std::exp(static_cast<double>(x) - mx);
        total += (std::log(sum) + mx) - static_cast<double>(row[tokens[t + 1]]);
    }
    return total / static_cast<double>(n - 1);
}

/// Mean negative log-likelihood over the predicted positions.
template <class T>
double nll_loss(const ModelT<T>& m, std::type_identity_t<const MergedDeltaT<T>*> delta, const TokenSeq& tokens) {
    if (tokens.size() < 2) throw InsufficientContextError("need at least 2 tokens to compute a loss");
    return nll_from_logits(forward(m, delta, tokens), tokens);
}

/// Greedy argmax; ties break to the lowest index.
template <class T>
int next_token_greedy(std::span<const T> logits_row) {
    if (logits_row.empty()) throw ShapeError("empty logits row");
    int best = 0;
    for (std::size_t i = 1; i < logits_row.size(); ++i)
        if (logits_row[i] > logits_row[best]) best = static_cast<int>(i);
    return best;
}

/// Temperature sampling, deterministic for a given seed.
template <class T>
int next_token_sampled(std::span<const T> logits_row, double temperature, std::uint64_t seed) {
    if (logits_row.empty()) throw ShapeError("empty logits row");
    if (!(temperature > 0)) throw ShapeError("temperature must be positive");
    Vec<double> scaled(logits_row.size());
    for (std::size_t i = 0; i < logits_row.size(); ++i) scaled[i] = static_cast<double>(logits_row[i]) / temperature;
    Vec<double> probs = softmax_row(scaled);
    std::mt19937_64 rng(seed);
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

}  // namespace loramix
