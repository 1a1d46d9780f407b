#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "pblab/rng.hpp"
#include "pblab/tensor.hpp"

namespace testutil {

using pblab::Tape;
using pblab::Tensor;

// Double-precision reference kernels, independent of the tape implementation.
// Finite differences run through these so the oracle is not limited by
// float32 loss resolution.
namespace ref {

using vec = std::vector<double>;

inline vec from(const Tensor& t) {
    return vec(t.data(), t.data() + t.size());
}

inline vec matmul(const vec& a, const vec& b, std::size_t m, std::size_t k, std::size_t n) {
    vec c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

// b stored row-major [n×k]; computes a·bᵀ
inline vec matmul_nt(const vec& a, const vec& b, std::size_t m, std::size_t k, std::size_t n) {
    vec c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[j * k + p];
    return c;
}

inline vec add(const vec& a, const vec& b) {
    vec c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
    return c;
}

inline vec add_bias(const vec& x, const vec& b, std::size_t rows, std::size_t cols) {
    vec c(x.size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) c[i * cols + j] = x[i * cols + j] + b[j];
    return c;
}

inline vec mul(const vec& a, const vec& b) {
    vec c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * b[i];
    return c;
}

inline double gelu1(double x) {
    const double c = 0.7978845608028654;
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

inline vec gelu(const vec& a) {
    vec c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = gelu1(a[i]);
    return c;
}

inline vec softmax_rows(const vec& x, std::size_t rows, std::size_t cols) {
    vec y(x.size());
    for (std::size_t i = 0; i < rows; ++i) {
        double mx = x[i * cols];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[i * cols + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            y[i * cols + j] = std::exp(x[i * cols + j] - mx);
            sum += y[i * cols + j];
        }
        for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] /= sum;
    }
    return y;
}

inline double cross_entropy(const vec& logits, std::size_t rows, std::size_t cols,
                            const std::vector<int>& labels) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        double mx = logits[i * cols];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, logits[i * cols + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) sum += std::exp(logits[i * cols + j] - mx);
        const double lse = mx + std::log(sum);
        acc -= logits[i * cols + static_cast<std::size_t>(labels[i])] - lse;
    }
    return acc / static_cast<double>(rows);
}

inline vec layer_norm(const vec& x, const vec& g, const vec& b, std::size_t rows,
                      std::size_t cols, double eps = 1e-5) {
    vec y(x.size());
    for (std::size_t i = 0; i < rows; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mu += x[i * cols + j];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
            var += (x[i * cols + j] - mu) * (x[i * cols + j] - mu);
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < cols; ++j)
            y[i * cols + j] = (x[i * cols + j] - mu) * inv * g[j] + b[j];
    }
    return y;
}

inline vec colwise_scale(const vec& x, const vec& s, std::size_t rows, std::size_t cols) {
    vec c(x.size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) c[i * cols + j] = x[i * cols + j] * s[j];
    return c;
}

inline double mean(const vec& a) {
    double acc = 0.0;
    for (double v : a) acc += v;
    return acc / static_cast<double>(a.size());
}

}  // namespace ref

// Implementation loss over a fresh tape; reference loss in double over the
// parameters' current values.
using LossFn = std::function<Tensor(Tape&)>;
using RefLossFn = std::function<double()>;

// Tape gradients vs central finite differences of the double reference, at
// `points` random indices per parameter (all indices when points == 0).
// Relative error < tol wherever |analytic| + |numeric| > 1e-6.
inline void fd_check(std::vector<Tensor> params, const LossFn& f, const RefLossFn& fref,
                     pblab::CounterRng rng, std::size_t points = 5, double h = 1e-3,
                     double tol = 1e-3) {
    for (auto& p : params) p.zero_grad();
    {
        Tape t;
        Tensor loss = f(t);
        const double impl = static_cast<double>(loss.item());
        const double refv = fref();
        CHECK(std::fabs(impl - refv) <=
              1e-4 * std::max({1.0, std::fabs(impl), std::fabs(refv)}));
        t.backward(loss);
    }
    std::vector<std::vector<float>> analytic;
    for (auto& p : params) analytic.emplace_back(p.grad(), p.grad() + p.size());

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        std::vector<std::size_t> idx;
        if (points == 0 || points >= p.size()) {
            for (std::size_t i = 0; i < p.size(); ++i) idx.push_back(i);
        } else {
            for (std::size_t i = 0; i < points; ++i)
                idx.push_back(static_cast<std::size_t>(rng.below(p.size())));
        }
        for (std::size_t i : idx) {
            const float keep = p.data()[i];
            p.data()[i] = static_cast<float>(static_cast<double>(keep) + h);
            const double x_up = static_cast<double>(p.data()[i]);
            const double up = fref();
            p.data()[i] = static_cast<float>(static_cast<double>(keep) - h);
            const double x_down = static_cast<double>(p.data()[i]);
            const double down = fref();
            p.data()[i] = keep;
            const double numeric = (up - down) / (x_up - x_down);
            const double a = static_cast<double>(analytic[pi][i]);
            if (std::fabs(a) + std::fabs(numeric) <= 1e-6) continue;
            const double rel = std::fabs(a - numeric) / std::max(std::fabs(a), std::fabs(numeric));
            INFO("param ", pi, " index ", i, " analytic ", a, " numeric ", numeric);
            CHECK(rel < tol);
        }
    }
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, pblab::CounterRng& rng,
                            bool requires_grad = true, float scale = 1.0f) {
    Tensor t(rows, cols, requires_grad);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.data()[i] = scale * static_cast<float>(rng.gaussian());
    return t;
}

}  // namespace testutil
