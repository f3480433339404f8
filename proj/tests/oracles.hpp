#pragma once

// Independent reference implementations used only by tests. These are written
// against the documented behavior, not against the library code paths, and
// stay deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "adgan/rng.hpp"

namespace oracle {

// quadruple-loop cross-correlation over an explicitly padded buffer
inline std::vector<double> conv2d_naive(const std::vector<double>& x, int N, int C, int H, int W,
                                        const std::vector<double>& k, int O, int KH, int KW,
                                        int stride, int pad, int& OH, int& OW) {
    int PH = H + 2 * pad, PW = W + 2 * pad;
    std::vector<double> padded(static_cast<std::size_t>(N) * C * PH * PW, 0.0);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                    padded[((static_cast<std::size_t>(n) * C + c) * PH + y + pad) * PW + xx + pad] =
                        x[((static_cast<std::size_t>(n) * C + c) * H + y) * W + xx];
    OH = (PH - KH) / stride + 1;
    OW = (PW - KW) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(N) * O * OH * OW, 0.0);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    double acc = 0.0;
                    for (int c = 0; c < C; ++c)
                        for (int ky = 0; ky < KH; ++ky)
                            for (int kx = 0; kx < KW; ++kx)
                                acc += padded[((static_cast<std::size_t>(n) * C + c) * PH +
                                               oy * stride + ky) * PW + ox * stride + kx] *
                                       k[((static_cast<std::size_t>(o) * C + c) * KH + ky) * KW + kx];
                    out[((static_cast<std::size_t>(n) * O + o) * OH + oy) * OW + ox] = acc;
                }
    return out;
}

// Brute-force AdapDrop: normalization, center sampling (one uniform per valid
// position, row-major), per-block top-k drop with ceil rounding and
// smallest-index-first ties, mask application, count/count_ones rescale.
// Decides cell-by-cell instead of block-by-block.
struct BruteAdapDrop {
    std::vector<double> output;
    std::vector<int> mask;  // 1 = keep
    double scale = 0.0;
    std::vector<std::pair<int, int>> centers;
};

inline BruteAdapDrop adapdrop_bruteforce(const std::vector<double>& a, int width, int height,
                                         int b_size, double k, double gamma, std::uint64_t seed) {
    BruteAdapDrop r;
    std::size_t n = a.size();
    double lo = *std::min_element(a.begin(), a.end());
    double hi = *std::max_element(a.begin(), a.end());
    std::vector<double> norm(n, 0.0);
    if (hi != lo)
        for (std::size_t i = 0; i < n; ++i) norm[i] = (a[i] - lo) / (hi - lo);
    adgan::Rng rng(seed);
    int half = b_size / 2;
    for (int i = half; i < height - half; ++i)
        for (int j = half; j < width - half; ++j)
            if (rng.uniform() < gamma) r.centers.emplace_back(i, j);
    int n_drop = static_cast<int>(std::ceil(k / 100.0 * b_size * b_size));
    r.mask.assign(n, 1);
    // a cell is dropped if, for some block containing it, fewer than n_drop
    // cells of that block are "larger" than it under the (value desc, index
    // asc) order
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            int me = y * width + x;
            for (auto [ci, cj] : r.centers) {
                if (std::abs(y - ci) > half || std::abs(x - cj) > half) continue;
                int larger = 0;
                for (int i = ci - half; i <= ci + half; ++i)
                    for (int j = cj - half; j <= cj + half; ++j) {
                        int other = i * width + j;
                        if (other == me) continue;
                        if (norm[static_cast<std::size_t>(other)] > norm[static_cast<std::size_t>(me)] ||
                            (norm[static_cast<std::size_t>(other)] == norm[static_cast<std::size_t>(me)] &&
                             other < me))
                            ++larger;
                    }
                if (larger < n_drop) {
                    r.mask[static_cast<std::size_t>(me)] = 0;
                    break;
                }
            }
        }
    std::int64_t ones = 0;
    for (int m : r.mask) ones += m;
    r.scale = ones == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(ones);
    r.output.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (r.mask[i]) r.output[i] = norm[i] * r.scale;
    return r;
}

// second metrics implementation, different arithmetic layout
struct BruteMetrics {
    double oa = 0.0, aa = 0.0, kappa = 0.0;
    std::vector<double> per_class;
};

inline BruteMetrics metrics_bruteforce(const std::vector<std::int64_t>& cm, int K) {
    BruteMetrics r;
    std::vector<std::int64_t> row(static_cast<std::size_t>(K), 0), col(static_cast<std::size_t>(K), 0);
    std::int64_t total = 0, agree = 0;
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
            std::int64_t v = cm[static_cast<std::size_t>(i) * K + j];
            row[static_cast<std::size_t>(i)] += v;
            col[static_cast<std::size_t>(j)] += v;
            total += v;
            if (i == j) agree += v;
        }
    r.oa = double(agree) / double(total);
    int defined = 0;
    for (int i = 0; i < K; ++i) {
        if (row[static_cast<std::size_t>(i)] == 0) {
            r.per_class.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        double acc = double(cm[static_cast<std::size_t>(i) * K + i]) / double(row[static_cast<std::size_t>(i)]);
        r.per_class.push_back(acc);
        r.aa += acc;
        ++defined;
    }
    if (defined) r.aa /= defined;
    double pe = 0.0;
    for (int i = 0; i < K; ++i)
        pe += (double(row[static_cast<std::size_t>(i)]) / double(total)) *
              (double(col[static_cast<std::size_t>(i)]) / double(total));
    r.kappa = pe >= 1.0 ? (r.oa == 1.0 ? 1.0 : 0.0) : (r.oa - pe) / (1.0 - pe);
    return r;
}

// power iteration with deflation on an explicitly formed covariance matrix
inline void power_iteration_eig(std::vector<double> a, int n, int count,
                                std::vector<double>& eigvals, std::vector<double>& eigvecs) {
    eigvals.clear();
    eigvecs.clear();
    adgan::Rng rng(7);
    for (int e = 0; e < count; ++e) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = rng.gaussian();
        double lambda = 0.0;
        for (int it = 0; it < 10000; ++it) {
            std::vector<double> w(static_cast<std::size_t>(n), 0.0);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    w[static_cast<std::size_t>(i)] += a[static_cast<std::size_t>(i) * n + j] *
                                                       v[static_cast<std::size_t>(j)];
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            for (auto& x : w) x /= norm;
            double diff = 0.0;
            for (int i = 0; i < n; ++i) diff += std::abs(w[static_cast<std::size_t>(i)] -
                                                          v[static_cast<std::size_t>(i)]);
            v = w;
            lambda = norm;
            if (diff < 1e-13 && it > 10) break;
        }
        eigvals.push_back(lambda);
        for (double x : v) eigvecs.push_back(x);
        // deflate
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                a[static_cast<std::size_t>(i) * n + j] -= lambda * v[static_cast<std::size_t>(i)] *
                                                           v[static_cast<std::size_t>(j)];
    }
}

}  // namespace oracle
