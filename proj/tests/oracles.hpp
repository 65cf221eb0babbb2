#pragma once

// Test-only oracles: independent brute-force routes the implementation is
// checked against. Nothing here may call the code paths under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dra/rng.hpp"
#include "dra/tensor.hpp"

namespace oracles {

// Sort-then-mean route for top-K MIL pooling.
inline double topk_sort_mean(const std::vector<double>& scores, double k_fraction) {
    std::vector<double> v = scores;
    std::sort(v.begin(), v.end(), std::greater<>());
    std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(k_fraction * static_cast<double>(v.size()))));
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += v[i];
    return sum / static_cast<double>(k);
}

// O(n^2) pairwise AUC with 0.5 tie credit.
inline double pairwise_auc(const std::vector<int>& y, const std::vector<double>& s) {
    double num = 0.0;
    std::size_t np = 0, nn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i]) ++np;
        else ++nn;
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j]) continue;
            if (s[i] > s[j]) num += 1.0;
            else if (s[i] == s[j]) num += 0.5;
        }
    }
    return num / (static_cast<double>(np) * static_cast<double>(nn));
}

// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-6) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Element-wise mean by direct loop.
inline dra::Tensor elementwise_mean(const std::vector<dra::Tensor>& ts) {
    dra::Tensor out = ts.front();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        for (const dra::Tensor& t : ts) s += t[i];
        out[i] = s / static_cast<double>(ts.size());
    }
    return out;
}

inline dra::Tensor random_tensor(std::vector<std::size_t> dims, dra::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
    dra::Tensor t(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dra::uniform_real(rng, lo, hi);
    return t;
}

inline dra::Tensor random_image(std::size_t side, dra::Rng& rng) {
    return random_tensor({3, side, side}, rng, 0.0, 1.0);
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double population_std(const std::vector<double>& v) {
    double m = mean_of(v);
    double sq = 0.0;
    for (double x : v) sq += (x - m) * (x - m);
    return std::sqrt(sq / static_cast<double>(v.size()));
}

} // namespace oracles
