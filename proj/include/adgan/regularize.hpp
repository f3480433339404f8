#pragma once

// Structured dropout on feature-map planes: plain dropout, DropBlock, and the
// adaptive variant that drops only the largest activations inside each block.
// Plane-level functions work on raw buffers; regularize() wraps them as a
// differentiable op on NCHW tensors (masks and scales enter the graph as
// constants).

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "adgan/rng.hpp"
#include "adgan/tensor.hpp"

namespace adgan {

enum class RegKind { kNone, kDropout, kDropBlock, kAdapDrop };

inline std::string reg_kind_name(RegKind k) {
    switch (k) {
        case RegKind::kNone: return "none";
        case RegKind::kDropout: return "dropout";
        case RegKind::kDropBlock: return "dropblock";
        case RegKind::kAdapDrop: return "adapdrop";
    }
    return "?";
}

inline RegKind reg_kind_from_name(const std::string& s) {
    if (s == "none") return RegKind::kNone;
    if (s == "dropout") return RegKind::kDropout;
    if (s == "dropblock") return RegKind::kDropBlock;
    if (s == "adapdrop") return RegKind::kAdapDrop;
    throw std::invalid_argument("unknown regularizer kind '" + s + "'");
}

struct RegularizerConfig {
    RegKind kind = RegKind::kAdapDrop;
    int b_size = 7;          // block side, odd
    double k = 40.0;         // percentile dropped per block, in [0,100]
    double keep_prob = 0.9;  // drives the Bernoulli center rate
    double dropout_p = 0.5;  // plain dropout only
    // Extension switch: map the adapdrop output back to the original value
    // range instead of leaving it in the normalized [0,1] domain.
    bool denormalize_after_drop = false;
};

struct DropMask {
    int width = 0, height = 0;
    std::vector<std::uint8_t> on;  // 1 = keep
    std::vector<std::pair<int, int>> centers;  // (row, col)
    int b_size = 0;

    std::int64_t count() const { return static_cast<std::int64_t>(on.size()); }
    std::int64_t count_ones() const {
        std::int64_t c = 0;
        for (auto v : on) c += v;
        return c;
    }
    // Eq-style rescale factor; 0 when everything was dropped.
    double scale() const {
        std::int64_t ones = count_ones();
        return ones == 0 ? 0.0 : static_cast<double>(count()) / static_cast<double>(ones);
    }
};

// Bernoulli rate for center sampling given the target keep probability.
inline double compute_gamma(double keep_prob, int b_size, int feat_size) {
    check(b_size > 0 && b_size <= feat_size,
          "compute_gamma: b_size " + std::to_string(b_size) + " exceeds feature size " +
              std::to_string(feat_size));
    double b2 = static_cast<double>(b_size) * b_size;
    double f = static_cast<double>(feat_size);
    double valid = f - b_size + 1;
    return (1.0 - keep_prob) / b2 * (f * f) / (valid * valid);
}

// (a - min) / (max - min); constant planes map to all zeros.
// Returns {min, max} of the input.
template <typename T>
std::pair<T, T> normalize_plane(const std::vector<T>& a, std::vector<T>& out) {
    T lo = a[0], hi = a[0];
    for (auto v : a) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    out.resize(a.size());
    if (hi == lo) {
        std::fill(out.begin(), out.end(), T(0));
    } else {
        T inv = T(1) / (hi - lo);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - lo) * inv;
    }
    return {lo, hi};
}

// One uniform draw per valid position, row-major. Centers stay at distance
// >= b_size/2 from the borders so every block fits inside the plane.
inline std::vector<std::pair<int, int>> sample_block_centers(int width, int height, int b_size,
                                                             double gamma, Rng& rng) {
    int half = b_size / 2;
    std::vector<std::pair<int, int>> centers;
    for (int i = half; i < height - half; ++i)
        for (int j = half; j < width - half; ++j)
            if (rng.uniform() < gamma) centers.emplace_back(i, j);
    return centers;
}

// Expand centers to blocks; inside each block zero the top k-percentile of the
// normalized values. n_drop = ceil(k/100 * b_size^2); ties drop the smallest
// plane-linear index first.
template <typename T>
DropMask adapdrop_mask(const std::vector<T>& normalized, int width, int height,
                       const std::vector<std::pair<int, int>>& centers, int b_size, double k) {
    check(k >= 0.0 && k <= 100.0, "adapdrop: k must be in [0,100]");
    DropMask m;
    m.width = width;
    m.height = height;
    m.b_size = b_size;
    m.centers = centers;
    m.on.assign(static_cast<std::size_t>(width) * height, 1);
    int half = b_size / 2;
    std::int64_t n_drop =
        static_cast<std::int64_t>(std::ceil(k / 100.0 * b_size * b_size));
    for (auto [ci, cj] : centers) {
        std::vector<std::pair<T, int>> cells;  // (value, linear index)
        for (int i = ci - half; i <= ci + half; ++i)
            for (int j = cj - half; j <= cj + half; ++j) {
                check(i >= 0 && i < height && j >= 0 && j < width,
                      "adapdrop: block at (" + std::to_string(ci) + "," + std::to_string(cj) +
                          ") leaves the plane");
                cells.emplace_back(normalized[static_cast<std::size_t>(i) * width + j],
                                   i * width + j);
            }
        std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::int64_t d = 0; d < n_drop && d < static_cast<std::int64_t>(cells.size()); ++d)
            m.on[static_cast<std::size_t>(cells[static_cast<std::size_t>(d)].second)] = 0;
    }
    return m;
}

// DropBlock mask: every cell of every block is zeroed.
inline DropMask dropblock_mask(int width, int height,
                               const std::vector<std::pair<int, int>>& centers, int b_size) {
    DropMask m;
    m.width = width;
    m.height = height;
    m.b_size = b_size;
    m.centers = centers;
    m.on.assign(static_cast<std::size_t>(width) * height, 1);
    int half = b_size / 2;
    for (auto [ci, cj] : centers)
        for (int i = ci - half; i <= ci + half; ++i)
            for (int j = cj - half; j <= cj + half; ++j) {
                check(i >= 0 && i < height && j >= 0 && j < width, "dropblock: block leaves the plane");
                m.on[static_cast<std::size_t>(i) * width + j] = 0;
            }
    return m;
}

template <typename T>
void apply_mask_scaled(std::vector<T>& plane, const DropMask& m) {
    T s = static_cast<T>(m.scale());
    for (std::size_t i = 0; i < plane.size(); ++i)
        plane[i] = m.on[i] ? plane[i] * s : T(0);
}

// Full AdapDrop transform of one plane (training mode).
// Output lives in the normalized domain unless cfg.denormalize_after_drop.
template <typename T>
std::vector<T> adapdrop_plane(const std::vector<T>& a, int width, int height,
                              const RegularizerConfig& cfg, std::uint64_t seed,
                              DropMask* mask_out = nullptr) {
    int feat = std::min(width, height);
    double gamma = compute_gamma(cfg.keep_prob, cfg.b_size, feat);
    std::vector<T> norm;
    auto [lo, hi] = normalize_plane(a, norm);
    Rng rng(seed);
    auto centers = sample_block_centers(width, height, cfg.b_size, gamma, rng);
    DropMask m = adapdrop_mask(norm, width, height, centers, cfg.b_size, cfg.k);
    apply_mask_scaled(norm, m);
    if (cfg.denormalize_after_drop && hi != lo)
        for (auto& v : norm) v = v * (hi - lo) + lo;
    if (mask_out) *mask_out = std::move(m);
    return norm;
}

template <typename T>
std::vector<T> dropblock_plane(const std::vector<T>& a, int width, int height,
                               const RegularizerConfig& cfg, std::uint64_t seed,
                               DropMask* mask_out = nullptr) {
    int feat = std::min(width, height);
    double gamma = compute_gamma(cfg.keep_prob, cfg.b_size, feat);
    Rng rng(seed);
    auto centers = sample_block_centers(width, height, cfg.b_size, gamma, rng);
    DropMask m = dropblock_mask(width, height, centers, cfg.b_size);
    std::vector<T> out(a);
    apply_mask_scaled(out, m);
    if (mask_out) *mask_out = std::move(m);
    return out;
}

// i.i.d. Bernoulli zeroing with 1/(1-p) inverted scaling; one uniform draw per
// element, row-major.
template <typename T>
std::vector<T> dropout_plane(const std::vector<T>& a, double p, std::uint64_t seed,
                             DropMask* mask_out = nullptr) {
    check(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1), got " + std::to_string(p));
    Rng rng(seed);
    std::vector<T> out(a.size());
    DropMask m;
    m.on.assign(a.size(), 1);
    T inv = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (rng.uniform() < p) {
            out[i] = T(0);
            m.on[i] = 0;
        } else {
            out[i] = a[i] * inv;
        }
    }
    if (mask_out) *mask_out = std::move(m);
    return out;
}

// ---------------------------------------------------------------------------
// Differentiable wrapper on NCHW feature maps. Train-only: in eval mode the
// transform is the identity. Each (sample, channel) plane gets an independent
// RNG stream derived from (seed, sample, channel). Masks, scales, and the
// adapdrop normalization coefficients are treated as constants of the graph,
// so the op is elementwise-affine in x: out = coeff * x + offset.
template <typename T>
Tensor<T> regularize(const Tensor<T>& x, const RegularizerConfig& cfg, std::uint64_t seed,
                     bool train) {
    if (!train || cfg.kind == RegKind::kNone) return x;
    check(x.shape().size() == 4, "regularize expects NCHW input, got " + shape_str(x.shape()));
    std::int64_t N = x.shape()[0], C = x.shape()[1];
    int H = static_cast<int>(x.shape()[2]), W = static_cast<int>(x.shape()[3]);
    // block-based regularizers are undefined on planes smaller than the block
    if (cfg.kind != RegKind::kDropout && std::min(H, W) < cfg.b_size) return x;
    std::size_t plane_sz = static_cast<std::size_t>(H) * W;
    auto coeff = std::make_shared<std::vector<T>>(x.data().size());
    std::vector<T> out(x.data().size());

    std::vector<T> plane(plane_sz);
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            std::size_t base = static_cast<std::size_t>((n * C + c)) * plane_sz;
            std::copy_n(x.data().begin() + base, plane_sz, plane.begin());
            std::uint64_t ps = derive_seed(seed, static_cast<std::uint64_t>(n),
                                           static_cast<std::uint64_t>(c));
            if (cfg.kind == RegKind::kDropout) {
                DropMask m;
                auto res = dropout_plane(plane, cfg.dropout_p, ps, &m);
                T inv = static_cast<T>(1.0 / (1.0 - cfg.dropout_p));
                for (std::size_t i = 0; i < plane_sz; ++i) {
                    (*coeff)[base + i] = m.on[i] ? inv : T(0);
                    out[base + i] = res[i];
                }
            } else if (cfg.kind == RegKind::kDropBlock) {
                DropMask m;
                auto res = dropblock_plane(plane, W, H, cfg, ps, &m);
                T s = static_cast<T>(m.scale());
                for (std::size_t i = 0; i < plane_sz; ++i) {
                    (*coeff)[base + i] = m.on[i] ? s : T(0);
                    out[base + i] = res[i];
                }
            } else {  // AdapDrop
                T lo = plane[0], hi = plane[0];
                for (auto v : plane) {
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                DropMask m;
                auto res = adapdrop_plane(plane, W, H, cfg, ps, &m);
                // res = ((x - lo) * inv_range) * mask * scale (plus optional
                // denormalization); min/max are constants of the backward map.
                T inv_range = hi == lo ? T(0) : T(1) / (hi - lo);
                T s = static_cast<T>(m.scale());
                T post = cfg.denormalize_after_drop && hi != lo ? (hi - lo) : T(1);
                for (std::size_t i = 0; i < plane_sz; ++i) {
                    T a = m.on[i] ? inv_range * s * post : T(0);
                    (*coeff)[base + i] = a;
                    out[base + i] = res[i];
                }
            }
        }
    }
    auto xn = x.node();
    return Tensor<T>::make_op(x.shape(), std::move(out), {x},
        [xn, coeff](typename Tensor<T>::Node& o) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                xn->grad[i] += o.grad[i] * (*coeff)[i];
        });
}

}  // namespace adgan
