#pragma once

#include <cmath>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "loramix/tensor.hpp"

namespace loramix {

/// One low-rank factor pair. The dense delta for the targeted weight is
/// (alpha / rank) * b * a, with a: rank x d_in and b: d_out x rank.
template <class T>
struct LoraFactors {
    Mat<T> a;
    Mat<T> b;
};

template <class T>
struct LoraAdapterT {
    std::string name;
    int rank = 0;
    double alpha = 0.0;
    std::map<std::string, LoraFactors<T>> targets;

    void validate() const {
        if (rank < 1) throw ShapeError("adapter rank must be >= 1");
        if (targets.empty()) throw ShapeError("adapter has no targets");
        for (const auto& [role, f] : targets) {
            if (f.a.rows != rank || f.b.cols != rank)
                throw ShapeError("factor rank mismatch for target '" + role + "'");
            if (f.a.cols < 1 || f.b.rows < 1)
                throw ShapeError("degenerate factor shape for target '" + role + "'");
        }
    }
};

using LoraAdapter = LoraAdapterT<float>;

/// Dense per-target deltas produced by a weighted adapter combination,
/// together with the weight vector that built them.
template <class T>
struct MergedDeltaT {
    std::map<std::string, Mat<T>> targets;
    std::vector<double> provenance;
};

using MergedDelta = MergedDeltaT<float>;

template <class T>
Mat<T> adapter_delta(const LoraAdapterT<T>& adapter, const std::string& role) {
    auto it = adapter.targets.find(role);
    if (it == adapter.targets.end())
        throw MissingTargetError("adapter '" + adapter.name + "' has no target '" + role + "'");
    const T scale = static_cast<T>(adapter.alpha / static_cast<double>(adapter.rank));
    Mat<T> delta = matmul(it->second.b, it->second.a);
    for (T& x : delta.data) x *= scale;
    return delta;
}

/// Delta of a single adapter across all of its targets (one-hot merge).
template <class T>
MergedDeltaT<T> single_adapter_delta(const LoraAdapterT<T>& adapter) {
    MergedDeltaT<T> out;
    out.provenance = {1.0};
    for (const auto& [role, f] : adapter.targets) out.targets.emplace(role, adapter_delta(adapter, role));
    return out;
}

template <class T>
MergedDeltaT<T> merge_adapters(const std::vector<LoraAdapterT<T>>& adapters, const std::vector<double>& weights) {
    if (adapters.empty()) throw ShapeError("merge of empty adapter list");
    if (adapters.size() != weights.size())
        throw ShapeError("adapter/weight count mismatch: " + std::to_string(adapters.size()) + " vs " +
                         std::to_string(weights.size()));
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (std::abs(sum - 1.0) > 1e-6)
        throw WeightError("merge weights sum to " + std::to_string(sum) + ", expected 1");

    const auto& first = adapters.front();
    for (const auto& ad : adapters) {
        if (ad.targets.size() != first.targets.size())
            throw IncompatibleAdaptersError("adapters '" + first.name + "' and '" + ad.name +
                                            "' target different role sets");
        for (const auto& [role, f] : first.targets) {
            auto it = ad.targets.find(role);
            if (it == ad.targets.end())
                throw IncompatibleAdaptersError("adapter '" + ad.name + "' is missing target '" + role + "'");
            if (it->second.a.cols != f.a.cols || it->second.b.rows != f.b.rows)
                throw IncompatibleAdaptersError("adapter '" + ad.name + "' target '" + role +
                                                "' has a mismatched shape");
        }
    }

    MergedDeltaT<T> out;
    out.provenance = weights;
    for (const auto& [role, f] : first.targets) {
        Mat<T> acc(f.b.rows, f.a.cols);
        for (std::size_t j = 0; j < adapters.size(); ++j) {
            const Mat<T> dj = adapter_delta(adapters[j], role);
            const T wj = static_cast<T>(weights[j]);
            for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += wj * dj.data[i];
        }
        out.targets.emplace(role, std::move(acc));
    }
    return out;
}

template <class T2, class T>
LoraAdapterT<T2> cast_adapter(const LoraAdapterT<T>& a) {
    LoraAdapterT<T2> out;
    out.name = a.name;
    out.rank = a.rank;
    out.alpha = a.alpha;
    for (const auto& [role, f] : a.targets) {
        LoraFactors<T2> g;
        g.a = Mat<T2>(f.a.rows, f.a.cols);
        g.b = Mat<T2>(f.b.rows, f.b.cols);
        for (std::size_t i = 0; i < f.a.data.size(); ++i) g.a.data[i] = static_cast<T2>(f.a.data[i]);
        for (std::size_t i = 0; i < f.b.data.size(); ++i) g.b.data[i] = static_cast<T2>(f.b.data[i]);
        out.targets.emplace(role, std::move(g));
    }
    return out;
}

}  // namespace loramix
