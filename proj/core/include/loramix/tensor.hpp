#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "loramix/errors.hpp"

namespace loramix {

/// Dense row-major matrix. Entries must be finite when constructed from
/// explicit data; zero-filled construction is always valid.
template <class T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Mat() = default;

    Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), T(0)) {
        if (r < 0 || c < 0) throw ShapeError("negative matrix dimension");
    }

    Mat(int r, int c, std::vector<T> d) : rows(r), cols(c), data(std::move(d)) {
        if (r < 0 || c < 0) throw ShapeError("negative matrix dimension");
        if (data.size() != static_cast<std::size_t>(r) * static_cast<std::size_t>(c))
            throw ShapeError("matrix data length " + std::to_string(data.size()) + " does not match " +
                             std::to_string(r) + "x" + std::to_string(c));
        for (T x : data)
            if (!std::isfinite(static_cast<double>(x))) throw ShapeError("non-finite matrix entry");
    }

    static Mat from_rows(std::initializer_list<std::initializer_list<T>> rs) {
        int r = static_cast<int>(rs.size());
        int c = r == 0 ? 0 : static_cast<int>(rs.begin()->size());
        std::vector<T> d;
        d.reserve(static_cast<std::size_t>(r) * c);
        for (const auto& row : rs) {
            if (static_cast<int>(row.size()) != c) throw ShapeError("ragged row in matrix literal");
            d.insert(d.end(), row.begin(), row.end());
        }
        return Mat(r, c, std::move(d));
    }

    T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const T& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::span<T> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const T> row(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

template <class T>
using Vec = std::vector<T>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;

template <class T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul shape mismatch: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    Mat<T> c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const T av = a(i, k);
            const T* brow = b.data.data() + static_cast<std::size_t>(k) * b.cols;
            T* crow = c.data.data() + static_cast<std::size_t>(i) * c.cols;
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <class T>
Mat<T> transpose(const Mat<T>& a) {
    Mat<T> t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

/// Numerically stable softmax over a contiguous row, in place.
template <class T>
void softmax_inplace(std::span<T> v) {
    if (v.empty()) throw ShapeError("softmax of empty vector");
    T mx = v[0];
    for (T x : v)
        if (x > mx) mx = x;
    double sum = 0.0;
    for (T& x : v) {
        double e = std::exp(static_cast<double>(x) - static_cast<double>(mx));
        x = static_cast<T>(e);
        sum += e;
    }
    for (T& x : v) x = static_cast<T>(static_cast<double>(x) / sum);
}

template <class T>
Vec<T> softmax_row(std::span<const T> v) {
    Vec<T> out(v.begin(), v.end());
    softmax_inplace(std::span<T>(out));
    return out;
}

template <class T>
Vec<T> softmax_row(const Vec<T>& v) {
    return softmax_row(std::span<const T>(v));
}

template <class T>
Vec<T> layernorm(std::span<const T> v, std::span<const T> gain, std::span<const T> bias, double eps) {
    if (v.size() != gain.size() || v.size() != bias.size())
        throw ShapeError("layernorm length mismatch");
    if (v.empty()) throw ShapeError("layernorm of empty vector");
    if (!(eps > 0)) throw ShapeError("layernorm eps must be positive");
    const std::size_t n = v.size();
    double mean = 0.0;
    for (T x : v) mean += static_cast<double>(x);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (T x : v) {
        double d = static_cast<double>(x) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    Vec<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double xhat = (static_cast<double>(v[i]) - mean) * rstd;
        out[i] = static_cast<T>(xhat * static_cast<double>(gain[i]) + static_cast<double>(bias[i]));
    }
    return out;
}

template <class T>
Vec<T> layernorm(const Vec<T>& v, const Vec<T>& gain, const Vec<T>& bias, double eps) {
    return layernorm(std::span<const T>(v), std::span<const T>(gain), std::span<const T>(bias), eps);
}

/// Cosine similarity, accumulated in 64-bit. Throws on a zero-norm input,
/// which signals an empty or degenerate context embedding.
template <class T>
double cosine_similarity(std::span<const T> u, std::span<const T> v) {
    if (u.size() != v.size()) throw ShapeError("cosine_similarity length mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        double a = static_cast<double>(u[i]);
        double b = static_cast<double>(v[i]);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if (nu == 0.0 || nv == 0.0) throw DegenerateEmbeddingError("cosine similarity of zero-norm vector");
    double s = dot / (std::sqrt(nu) * std::sqrt(nv));
    if (s > 1.0) s = 1.0;
    if (s < -1.0) s = -1.0;
    return s;
}

template <class T>
double cosine_similarity(const Vec<T>& u, const Vec<T>& v) {
    return cosine_similarity(std::span<const T>(u), std::span<const T>(v));
}

}  // namespace loramix
