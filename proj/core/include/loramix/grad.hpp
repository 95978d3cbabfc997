#pragma once

#include <map>
#include <type_traits>
#include <string>

#include "loramix/model.hpp"

namespace loramix {

namespace detail {

template <class T>
Mat<T>& grad_slot(std::map<std::string, Mat<T>>& grads, const std::string& name, int rows, int cols) {
    auto it = grads.find(name);
    if (it == grads.end()) it = grads.emplace(name, Mat<T>(rows, cols)).first;
    return it->second;
}

/// Backward of y = x * w^T + b. Accumulates dW and db, returns dx.
template <class T>
Mat<T> linear_backward(const Mat<T>& dy, const Mat<T>& x, const Mat<T>& w, std::map<std::string, Mat<T>>& grads,
                       const std::string& w_name, const std::string* b_name) {
    Mat<T>& dw = grad_slot(grads, w_name, w.rows, w.cols);
    for (int o = 0; o < w.rows; ++o) {
        T* dwo = dw.data.data() + static_cast<std::size_t>(o) * w.cols;
        for (int i = 0; i < x.rows; ++i) {
            const T g = dy(i, o);
            if (g == T(0)) continue;
            const T* xi = x.data.data() + static_cast<std::size_t>(i) * x.cols;
            for (int k = 0; k < x.cols; ++k) dwo[k] += g * xi[k];
        }
    }
    if (b_name) {
        Mat<T>& db = grad_slot(grads, *b_name, 1, w.rows);
        for (int i = 0; i < dy.rows; ++i)
            for (int o = 0; o < dy.cols; ++o) db.data[o] += dy(i, o);
    }
    Mat<T> dx(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        T* dxi = dx.data.data() + static_cast<std::size_t>(i) * x.cols;
        for (int o = 0; o < w.rows; ++o) {
            const T g = dy(i, o);
            if (g == T(0)) continue;
            const T* wo = w.data.data() + static_cast<std::size_t>(o) * w.cols;
            for (int k = 0; k < x.cols; ++k) dxi[k] += g * wo[k];
        }
    }
    return dx;
}

/// Backward of a row-wise layernorm with affine gain/bias.
template <class T>
Mat<T> layernorm_backward(const Mat<T>& dy, const Mat<T>& xhat, const std::vector<T>& rstd, const Mat<T>& gain,
                          std::map<std::string, Mat<T>>& grads, const std::string& g_name,
                          const std::string& b_name) {
    const int n = dy.rows, d = dy.cols;
    Mat<T>& dg = grad_slot(grads, g_name, 1, d);
    Mat<T>& db = grad_slot(grads, b_name, 1, d);
    Mat<T> dx(n, d);
    for (int i = 0; i < n; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < d; ++j) {
            const double dxh = static_cast<double>(dy(i, j)) * static_cast<double>(gain.data[j]);
            m1 += dxh;
            m2 += dxh * static_cast<double>(xhat(i, j));
            dg.data[j] += dy(i, j) * xhat(i, j);
            db.data[j] += dy(i, j);
        }
        m1 /= d;
        m2 /= d;
        const double rs = static_cast<double>(rstd[i]);
        for (int j = 0; j < d; ++j) {
            const double dxh = static_cast<double>(dy(i, j)) * static_cast<double>(gain.data[j]);
            dx(i, j) = static_cast<T>((dxh - m1 - static_cast<double>(xhat(i, j)) * m2) * rs);
        }
    }
    return dx;
}

}  // namespace detail

/// Forward pass plus full backward: accumulates gradients of the mean NLL
/// into `grads`, keyed by parameter name, with respect to the effective
/// (delta-patched) weights. Returns the loss.
template <class T>
double nll_and_grad(const ModelT<T>& m, std::type_identity_t<const MergedDeltaT<T>*> delta, const TokenSeq& tokens,
                    std::map<std::string, Mat<T>>& grads) {
    if (tokens.size() < 2) throw InsufficientContextError("need at least 2 tokens to compute a loss");
    ForwardCache<T> cache;
    forward_cached(m, delta, tokens, cache);
    const double loss = nll_from_logits(cache.logits, tokens);

    const detail::EffWeights<T> w(m, delta);
    const ModelConfig& c = m.config;
    const int n = static_cast<int>(tokens.size());
    const int d = c.d_model, nh = c.n_heads, dh = d / nh, V = c.vocab_size;
    const double inv_pred = 1.0 / static_cast<double>(n - 1);
    const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    // d loss / d logits: softmax minus one-hot on the predicted positions.
    Mat<T> dlogits(n, V);
    for (int t = 0; t + 1 < n; ++t) {
        auto row = cache.logits.row(t);
        double mx = static_cast<double>(row[0]);
        for (T x : row) mx = std::max(mx, static_cast<double>(x));
        double sum = 0.0;
        for (T x : row) sum += std::exp(static_cast<double>(x) - mx);
        for (int j = 0; j < V; ++j) {
            double p = std::exp(static_cast<double>(row[j]) - mx) / sum;
            dlogits(t, j) = static_cast<T>((p - (j == tokens[t + 1] ? 1.0 : 0.0)) * inv_pred);
        }
    }

    Mat<T> dfnorm = detail::linear_backward(dlogits, cache.final_norm, w.get("head"), grads, "head", nullptr);
    Mat<T> dx = detail::layernorm_backward(dfnorm, cache.lnf_xhat, cache.lnf_rstd, m.param("ln_f.g"), grads,
                                           "ln_f.g", "ln_f.b");

    for (int l = c.n_layers - 1; l >= 0; --l) {
        const LayerCache<T>& lc = cache.layers[l];
        const std::string p = "blk" + std::to_string(l) + ".";

        // MLP branch: h_out = h_attn + w2(relu(w1(a2))).
        const std::string b2 = p + "mlp.b2";
        Mat<T> dact = detail::linear_backward(dx, lc.mlp_act, w.get(p + "mlp.w2"), grads, p + "mlp.w2", &b2);
        for (std::size_t i = 0; i < dact.data.size(); ++i)
            if (lc.mlp_pre.data[i] <= T(0)) dact.data[i] = T(0);
        const std::string b1 = p + "mlp.b1";
        Mat<T> da2 = detail::linear_backward(dact, lc.a2, w.get(p + "mlp.w1"), grads, p + "mlp.w1", &b1);
        Mat<T> dh_attn = detail::layernorm_backward(da2, lc.ln2_xhat, lc.ln2_rstd, m.param(p + "ln2.g"), grads,
                                                    p + "ln2.g", p + "ln2.b");
        for (std::size_t i = 0; i < dh_attn.data.size(); ++i) dh_attn.data[i] += dx.data[i];

        // Attention branch: h_attn = x_in + wo(concat(heads)).
        Mat<T> dconcat =
            detail::linear_backward(dh_attn, lc.attn_concat, w.get(p + "attn.wo"), grads, p + "attn.wo", nullptr);

        Mat<T> dq(n, d), dk(n, d), dv(n, d);
        std::vector<T> dp(n), ds(n);
        for (int h = 0; h < nh; ++h) {
            const Mat<T>& probs = lc.attn_probs[h];
            const int off = h * dh;
            for (int i = 0; i < n; ++i) {
                // dP over the causal row, then softmax backward.
                double srow = 0.0;
                for (int j = 0; j <= i; ++j) {
                    T acc = T(0);
                    for (int t = 0; t < dh; ++t) acc += dconcat(i, off + t) * lc.v(j, off + t);
                    dp[j] = acc;
                    srow += static_cast<double>(acc) * static_cast<double>(probs(i, j));
                }
                for (int j = 0; j <= i; ++j)
                    ds[j] = static_cast<T>(static_cast<double>(probs(i, j)) *
                                           (static_cast<double>(dp[j]) - srow)) *
                            att_scale;
                for (int j = 0; j <= i; ++j) {
                    const T pij = probs(i, j);
                    const T dsij = ds[j];
                    for (int t = 0; t < dh; ++t) {
                        dv(j, off + t) += pij * dconcat(i, off + t);
                        dq(i, off + t) += dsij * lc.k(j, off + t);
                        dk(j, off + t) += dsij * lc.q(i, off + t);
                    }
                }
            }
        }

        Mat<T> da1 = detail::linear_backward(dq, lc.a1, w.get(p + "attn.wq"), grads, p + "attn.wq", nullptr);
        Mat<T> da1k = detail::linear_backward(dk, lc.a1, w.get(p + "attn.wk"), grads, p + "attn.wk", nullptr);
        Mat<T> da1v = detail::linear_backward(dv, lc.a1, w.get(p + "attn.wv"), grads, p + "attn.wv", nullptr);
        for (std::size_t i = 0; i < da1.data.size(); ++i) da1.data[i] += da1k.data[i] + da1v.data[i];

        Mat<T> dx_in = detail::layernorm_backward(da1, lc.ln1_xhat, lc.ln1_rstd, m.param(p + "ln1.g"), grads,
                                                  p + "ln1.g", p + "ln1.b");
        for (std::size_t i = 0; i < dx_in.data.size(); ++i) dx_in.data[i] += dh_attn.data[i];
        dx = std::move(dx_in);
    }

    Mat<T>& dtok = detail::grad_slot(grads, "tok_emb", c.vocab_size, d);
    Mat<T>& dpos = detail::grad_slot(grads, "pos_emb", c.max_seq_len, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            dtok(tokens[i], j) += dx(i, j);
            dpos(i, j) += dx(i, j);
        }
    }
    return loss;
}

}  // namespace loramix
