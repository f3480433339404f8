#pragma once

// Dense tensor with reverse-mode automatic differentiation. Operations record
// a backward rule onto the node graph; Tensor::backward() replays them in
// reverse topological order. Scalar type is a template parameter: double for
// oracle tests, float for training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "adgan/rng.hpp"

namespace adgan {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

template <typename T>
class Tensor {
  public:
    struct Node {
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad;
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void()> backprop;

        std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
        void ensure_grad() {
            if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        }
    };

    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        check(!shape.empty(), "tensor shape must be non-empty");
        for (auto e : shape) check(e > 0, "tensor extents must be positive, got " + shape_str(shape));
        node_->shape = std::move(shape);
        node_->value.assign(static_cast<std::size_t>(shape_numel(node_->shape)), T(0));
        node_->requires_grad = requires_grad;
    }
    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        Tensor t(std::move(shape), requires_grad);
        check(static_cast<std::int64_t>(data.size()) == t.numel(),
              "data length does not match shape " + shape_str(t.shape()));
        t.node_->value = std::move(data);
        return t;
    }
    static Tensor scalar(T v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t numel() const { return node_->numel(); }
    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }
    std::vector<T>& grad() { return node_->grad; }
    const std::vector<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }
    T item() const {
        check(numel() == 1, "item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }

    std::shared_ptr<Node> node() const { return node_; }

    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    // Reverse sweep from this (scalar) tensor. Builds the tape by depth-first
    // topological sort, seeds d(self)/d(self) = 1 and runs each recorded
    // backward rule once.
    void backward() {
        check(numel() == 1, "backward() requires a scalar loss, got " + shape_str(shape()));
        std::vector<Node*> tape;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node* p = n->parents[idx++].get();
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                tape.push_back(n);
                stack.pop_back();
            }
        }
        node_->ensure_grad();
        node_->grad[0] += T(1);
        for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
            if ((*it)->backprop) (*it)->backprop();
        }
    }

    // ---- construction helper used by ops ----
    static Tensor make_op(Shape shape, std::vector<T> value,
                          std::vector<Tensor> inputs,
                          std::function<void(Node&)> backprop) {
        Tensor out;
        out.node_ = std::make_shared<Node>();
        out.node_->shape = std::move(shape);
        out.node_->value = std::move(value);
        bool rg = false;
        for (auto& in : inputs) rg = rg || in.requires_grad();
        out.node_->requires_grad = rg;
        if (rg) {
            for (auto& in : inputs) out.node_->parents.push_back(in.node_);
            Node* raw = out.node_.get();
            out.node_->backprop = [raw, fn = std::move(backprop)]() { fn(*raw); };
        }
        return out;
    }

  private:
    std::shared_ptr<Node> node_;
};

// ---------------------------------------------------------------------------
// elementwise ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.shape() == b.shape(),
          "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> v(a.data());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.data()[i];
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_op(a.shape(), std::move(v), {a, b},
        [an, bn](typename Tensor<T>::Node& out) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < out.grad.size(); ++i) an->grad[i] += out.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < out.grad.size(); ++i) bn->grad[i] += out.grad[i];
            }
        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.shape() == b.shape(),
          "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> v(a.data());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b.data()[i];
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_op(a.shape(), std::move(v), {a, b},
        [an, bn](typename Tensor<T>::Node& out) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < out.grad.size(); ++i)
                    an->grad[i] += out.grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < out.grad.size(); ++i)
                    bn->grad[i] += out.grad[i] * an->value[i];
            }
        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> v(a.data());
    for (auto& e : v) e *= s;
    auto an = a.node();
    return Tensor<T>::make_op(a.shape(), std::move(v), {a},
        [an, s](typename Tensor<T>::Node& out) {
            an->ensure_grad();
            for (std::size_t i = 0; i < out.grad.size(); ++i) an->grad[i] += out.grad[i] * s;
        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc = 0;
    for (auto e : a.data()) acc += e;
    auto an = a.node();
    return Tensor<T>::make_op({1}, {acc}, {a},
        [an](typename Tensor<T>::Node& out) {
            an->ensure_grad();
            for (auto& g : an->grad) g += out.grad[0];
        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    check(shape_numel(shape) == a.numel(),
          "reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    auto an = a.node();
    return Tensor<T>::make_op(std::move(shape), a.data(), {a},
        [an](typename Tensor<T>::Node& out) {
            an->ensure_grad();
            for (std::size_t i = 0; i < out.grad.size(); ++i) an->grad[i] += out.grad[i];
        });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    std::vector<T> v(a.data());
    for (auto& e : v) e = e > T(0) ? e : slope * e;
    auto an = a.node();
    return Tensor<T>::make_op(a.shape(), std::move(v), {a},
        [an, slope](typename Tensor<T>::Node& out) {
            an->ensure_grad();
            for (std::size_t i = 0; i < out.grad.size(); ++i)
                an->grad[i] += out.grad[i] * (an->value[i] > T(0) ? T(1) : slope);
        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) { return leaky_relu(a, T(0)); }

template <typename T>
Tensor<T> tanh_act(const Tensor<T>& a) {
    std::vector<T> v(a.data());
    for (auto& e : v) e = std::tanh(e);
    auto an = a.node();
    return Tensor<T>::make_op(a.shape(), std::move(v), {a},
        [an](typename Tensor<T>::Node& out) {
            an->ensure_grad();
            for (std::size_t i = 0; i < out.grad.size(); ++i)
                an->grad[i] += out.grad[i] * (T(1) - out.value[i] * out.value[i]);
        });
}

// Concatenate along the channel axis of NCHW tensors.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.shape().size() == 4 && b.shape().size() == 4,
          "concat_channels expects NCHW tensors");
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    check(sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3],
          "concat_channels: incompatible shapes " + shape_str(sa) + " vs " + shape_str(sb));
    std::int64_t n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
    Shape os{n, ca + cb, sa[2], sa[3]};
    std::vector<T> v(static_cast<std::size_t>(shape_numel(os)));
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(a.data().begin() + i * ca * hw, ca * hw, v.begin() + i * (ca + cb) * hw);
        std::copy_n(b.data().begin() + i * cb * hw, cb * hw,
                    v.begin() + (i * (ca + cb) + ca) * hw);
    }
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_op(os, std::move(v), {a, b},
        [an, bn, n, ca, cb, hw](typename Tensor<T>::Node& out) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < ca * hw; ++j)
                        an->grad[i * ca * hw + j] += out.grad[i * (ca + cb) * hw + j];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < cb * hw; ++j)
                        bn->grad[i * cb * hw + j] += out.grad[(i * (ca + cb) + ca) * hw + j];
            }
        });
}

// ---------------------------------------------------------------------------
// convolution (cross-correlation, no kernel flip)

// input NCHW, kernel OIHW -> output N O H' W' with H' = (H + 2p - kh)/s + 1
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding) {
    check(stride > 0, "conv2d: stride must be positive");
    check(padding >= 0, "conv2d: padding must be non-negative");
    check(input.shape().size() == 4 && kernel.shape().size() == 4,
          "conv2d: expected 4-d input/kernel, got " + shape_str(input.shape()) + " and " +
              shape_str(kernel.shape()));
    const auto& is = input.shape();
    const auto& ks = kernel.shape();
    check(is[1] == ks[1], "conv2d: channel mismatch, input " + shape_str(is) + " vs kernel " +
                              shape_str(ks));
    std::int64_t N = is[0], C = is[1], H = is[2], W = is[3];
    std::int64_t O = ks[0], KH = ks[2], KW = ks[3];
    std::int64_t OH = (H + 2 * padding - KH) / stride + 1;
    std::int64_t OW = (W + 2 * padding - KW) / stride + 1;
    check(OH > 0 && OW > 0, "conv2d: non-positive output extent for input " + shape_str(is) +
                                " and kernel " + shape_str(ks));
    Shape os{N, O, OH, OW};
    std::vector<T> out(static_cast<std::size_t>(shape_numel(os)), T(0));
    const T* x = input.data().data();
    const T* k = kernel.data().data();
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t o = 0; o < O; ++o) {
            for (std::int64_t oy = 0; oy < OH; ++oy) {
                for (std::int64_t ox = 0; ox < OW; ++ox) {
                    T acc = 0;
                    for (std::int64_t c = 0; c < C; ++c) {
                        for (std::int64_t ky = 0; ky < KH; ++ky) {
                            std::int64_t iy = oy * stride - padding + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (std::int64_t kx = 0; kx < KW; ++kx) {
                                std::int64_t ix = ox * stride - padding + kx;
                                if (ix < 0 || ix >= W) continue;
                                acc += x[((n * C + c) * H + iy) * W + ix] *
                                       k[((o * C + c) * KH + ky) * KW + kx];
                            }
                        }
                    }
                    out[((n * O + o) * OH + oy) * OW + ox] = acc;
                }
            }
        }
    }
    auto xn = input.node(), kn = kernel.node();
    return Tensor<T>::make_op(os, std::move(out), {input, kernel},
        [xn, kn, N, C, H, W, O, KH, KW, OH, OW, stride, padding](typename Tensor<T>::Node& out) {
            const T* g = out.grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                T* gx = xn->grad.data();
                const T* k = kn->value.data();
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t o = 0; o < O; ++o)
                        for (std::int64_t oy = 0; oy < OH; ++oy)
                            for (std::int64_t ox = 0; ox < OW; ++ox) {
                                T go = g[((n * O + o) * OH + oy) * OW + ox];
                                if (go == T(0)) continue;
                                for (std::int64_t c = 0; c < C; ++c)
                                    for (std::int64_t ky = 0; ky < KH; ++ky) {
                                        std::int64_t iy = oy * stride - padding + ky;
                                        if (iy < 0 || iy >= H) continue;
                                        for (std::int64_t kx = 0; kx < KW; ++kx) {
                                            std::int64_t ix = ox * stride - padding + kx;
                                            if (ix < 0 || ix >= W) continue;
                                            gx[((n * C + c) * H + iy) * W + ix] +=
                                                go * k[((o * C + c) * KH + ky) * KW + kx];
                                        }
                                    }
                            }
            }
            if (kn->requires_grad) {
                kn->ensure_grad();
                T* gk = kn->grad.data();
                const T* x = xn->value.data();
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t o = 0; o < O; ++o)
                        for (std::int64_t oy = 0; oy < OH; ++oy)
                            for (std::int64_t ox = 0; ox < OW; ++ox) {
                                T go = g[((n * O + o) * OH + oy) * OW + ox];
                                if (go == T(0)) continue;
                                for (std::int64_t c = 0; c < C; ++c)
                                    for (std::int64_t ky = 0; ky < KH; ++ky) {
                                        std::int64_t iy = oy * stride - padding + ky;
                                        if (iy < 0 || iy >= H) continue;
                                        for (std::int64_t kx = 0; kx < KW; ++kx) {
                                            std::int64_t ix = ox * stride - padding + kx;
                                            if (ix < 0 || ix >= W) continue;
                                            gk[((o * C + c) * KH + ky) * KW + kx] +=
                                                go * x[((n * C + c) * H + iy) * W + ix];
                                        }
                                    }
                            }
            }
        });
}

// Transposed convolution. input N C H W, kernel (C, O, KH, KW) -> N O H' W'
// with H' = (H-1)*stride - 2*padding + KH. Forward equals the input-gradient
// map of conv2d with the same kernel/stride/padding.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride,
                           int padding) {
    check(stride > 0, "conv_transpose2d: stride must be positive");
    check(padding >= 0, "conv_transpose2d: padding must be non-negative");
    check(input.shape().size() == 4 && kernel.shape().size() == 4,
          "conv_transpose2d: expected 4-d input/kernel, got " + shape_str(input.shape()) +
              " and " + shape_str(kernel.shape()));
    const auto& is = input.shape();
    const auto& ks = kernel.shape();
    check(is[1] == ks[0], "conv_transpose2d: channel mismatch, input " + shape_str(is) +
                              " vs kernel " + shape_str(ks));
    std::int64_t N = is[0], C = is[1], H = is[2], W = is[3];
    std::int64_t O = ks[1], KH = ks[2], KW = ks[3];
    std::int64_t OH = (H - 1) * stride - 2 * padding + KH;
    std::int64_t OW = (W - 1) * stride - 2 * padding + KW;
    check(OH > 0 && OW > 0, "conv_transpose2d: non-positive output extent for input " +
                                shape_str(is) + " and kernel " + shape_str(ks));
    Shape os{N, O, OH, OW};
    std::vector<T> out(static_cast<std::size_t>(shape_numel(os)), T(0));
    const T* x = input.data().data();
    const T* k = kernel.data().data();
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t y = 0; y < H; ++y)
                for (std::int64_t xx = 0; xx < W; ++xx) {
                    T v = x[((n * C + c) * H + y) * W + xx];
                    if (v == T(0)) continue;
                    for (std::int64_t o = 0; o < O; ++o)
                        for (std::int64_t ky = 0; ky < KH; ++ky) {
                            std::int64_t oy = y * stride - padding + ky;
                            if (oy < 0 || oy >= OH) continue;
                            for (std::int64_t kx = 0; kx < KW; ++kx) {
                                std::int64_t ox = xx * stride - padding + kx;
                                if (ox < 0 || ox >= OW) continue;
                                out[((n * O + o) * OH + oy) * OW + ox] +=
                                    v * k[((c * O + o) * KH + ky) * KW + kx];
                            }
                        }
                }
    auto xn = input.node(), kn = kernel.node();
    return Tensor<T>::make_op(os, std::move(out), {input, kernel},
        [xn, kn, N, C, H, W, O, KH, KW, OH, OW, stride, padding](typename Tensor<T>::Node& out) {
            const T* g = out.grad.data();
            if (xn->requires_grad) {
                // d/d(input) is a plain conv2d of the output gradient.
                xn->ensure_grad();
                T* gx = xn->grad.data();
                const T* k = kn->value.data();
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t c = 0; c < C; ++c)
                        for (std::int64_t y = 0; y < H; ++y)
                            for (std::int64_t xx = 0; xx < W; ++xx) {
                                T acc = 0;
                                for (std::int64_t o = 0; o < O; ++o)
                                    for (std::int64_t ky = 0; ky < KH; ++ky) {
                                        std::int64_t oy = y * stride - padding + ky;
                                        if (oy < 0 || oy >= OH) continue;
                                        for (std::int64_t kx = 0; kx < KW; ++kx) {
                                            std::int64_t ox = xx * stride - padding + kx;
                                            if (ox < 0 || ox >= OW) continue;
                                            acc += g[((n * O + o) * OH + oy) * OW + ox] *
                                                   k[((c * O + o) * KH + ky) * KW + kx];
                                        }
                                    }
                                gx[((n * C + c) * H + y) * W + xx] += acc;
                            }
            }
            if (kn->requires_grad) {
                kn->ensure_grad();
                T* gk = kn->grad.data();
                const T* x = xn->value.data();
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t c = 0; c < C; ++c)
                        for (std::int64_t y = 0; y < H; ++y)
                            for (std::int64_t xx = 0; xx < W; ++xx) {
                                T v = x[((n * C + c) * H + y) * W + xx];
                                if (v == T(0)) continue;
                                for (std::int64_t o = 0; o < O; ++o)
                                    for (std::int64_t ky = 0; ky < KH; ++ky) {
                                        std::int64_t oy = y * stride - padding + ky;
                                        if (oy < 0 || oy >= OH) continue;
                                        for (std::int64_t kx = 0; kx < KW; ++kx) {
                                            std::int64_t ox = xx * stride - padding + kx;
                                            if (ox < 0 || ox >= OW) continue;
                                            gk[((c * O + o) * KH + ky) * KW + kx] +=
                                                v * g[((n * O + o) * OH + oy) * OW + ox];
                                        }
                                    }
                            }
            }
        });
}

// Per-channel bias add on NCHW.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    check(x.shape().size() == 4, "add_channel_bias expects NCHW input");
    std::int64_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
    check(bias.numel() == C, "add_channel_bias: bias length " + shape_str(bias.shape()) +
                                 " does not match channels of " + shape_str(x.shape()));
    std::vector<T> v(x.data());
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < HW; ++i) v[(n * C + c) * HW + i] += bias.data()[c];
    auto xn = x.node(), bn = bias.node();
    return Tensor<T>::make_op(x.shape(), std::move(v), {x, bias},
        [xn, bn, N, C, HW](typename Tensor<T>::Node& out) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < out.grad.size(); ++i) xn->grad[i] += out.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t c = 0; c < C; ++c)
                        for (std::int64_t i = 0; i < HW; ++i)
                            bn->grad[c] += out.grad[(n * C + c) * HW + i];
            }
        });
}

// ---------------------------------------------------------------------------
// batch normalization

enum class NormMode { kTrain, kEval };

// NCHW batch norm over (N,H,W) per channel. Train mode uses batch statistics
// (biased variance) and updates running stats in place; eval mode reads them.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::vector<T>& running_mean, std::vector<T>& running_var, NormMode mode,
                     T momentum, T eps) {
    check(x.shape().size() == 4, "batch_norm expects NCHW input, got " + shape_str(x.shape()));
    std::int64_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
    check(gamma.numel() == C && beta.numel() == C,
          "batch_norm: gamma/beta length must equal channel count " + std::to_string(C));
    check(static_cast<std::int64_t>(running_mean.size()) == C &&
              static_cast<std::int64_t>(running_var.size()) == C,
          "batch_norm: running stats length must equal channel count");
    std::int64_t M = N * HW;
    auto mean_c = std::make_shared<std::vector<T>>(C, T(0));
    auto inv_std = std::make_shared<std::vector<T>>(C, T(0));
    if (mode == NormMode::kTrain) {
        for (std::int64_t c = 0; c < C; ++c) {
            T m = 0;
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t i = 0; i < HW; ++i) m += x.data()[(n * C + c) * HW + i];
            m /= static_cast<T>(M);
            T v = 0;
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t i = 0; i < HW; ++i) {
                    T d = x.data()[(n * C + c) * HW + i] - m;
                    v += d * d;
                }
            v /= static_cast<T>(M);
            (*mean_c)[c] = m;
            (*inv_std)[c] = T(1) / std::sqrt(v + eps);
            running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * m;
            running_var[c] = (T(1) - momentum) * running_var[c] + momentum * v;
        }
    } else {
        for (std::int64_t c = 0; c < C; ++c) {
            (*mean_c)[c] = running_mean[c];
            (*inv_std)[c] = T(1) / std::sqrt(running_var[c] + eps);
        }
    }
    std::vector<T> out(x.data().size());
    auto xhat = std::make_shared<std::vector<T>>(x.data().size());
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < HW; ++i) {
                std::size_t idx = (n * C + c) * HW + i;
                T h = (x.data()[idx] - (*mean_c)[c]) * (*inv_std)[c];
                (*xhat)[idx] = h;
                out[idx] = gamma.data()[c] * h + beta.data()[c];
            }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    bool train = mode == NormMode::kTrain;
    return Tensor<T>::make_op(x.shape(), std::move(out), {x, gamma, beta},
        [xn, gn, bn, xhat, inv_std, N, C, HW, train](typename Tensor<T>::Node& out) {
            std::int64_t M = N * HW;
            const T* g = out.grad.data();
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t c = 0; c < C; ++c)
                        for (std::int64_t i = 0; i < HW; ++i) {
                            std::size_t idx = (n * C + c) * HW + i;
                            gn->grad[c] += g[idx] * (*xhat)[idx];
                        }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t c = 0; c < C; ++c)
                        for (std::int64_t i = 0; i < HW; ++i) bn->grad[c] += g[(n * C + c) * HW + i];
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::int64_t c = 0; c < C; ++c) {
                    T gam = gn->value[c];
                    if (!train) {
                        for (std::int64_t n = 0; n < N; ++n)
                            for (std::int64_t i = 0; i < HW; ++i) {
                                std::size_t idx = (n * C + c) * HW + i;
                                xn->grad[idx] += g[idx] * gam * (*inv_std)[c];
                            }
                        continue;
                    }
                    T sum_g = 0, sum_gh = 0;
                    for (std::int64_t n = 0; n < N; ++n)
                        for (std::int64_t i = 0; i < HW; ++i) {
                            std::size_t idx = (n * C + c) * HW + i;
                            sum_g += g[idx];
                            sum_gh += g[idx] * (*xhat)[idx];
                        }
                    T mg = sum_g / static_cast<T>(M);
                    T mgh = sum_gh / static_cast<T>(M);
                    for (std::int64_t n = 0; n < N; ++n)
                        for (std::int64_t i = 0; i < HW; ++i) {
                            std::size_t idx = (n * C + c) * HW + i;
                            xn->grad[idx] +=
                                gam * (*inv_std)[c] * (g[idx] - mg - (*xhat)[idx] * mgh);
                        }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// softmax cross-entropy

// logits N x C (or N x C x 1 x 1), targets are 0-based class indices.
// Returns the mean negative log-probability of the targets.
template <typename T>
Tensor<T> softmax_log_loss(const Tensor<T>& logits, const std::vector<int>& targets) {
    const auto& s = logits.shape();
    check(s.size() == 2 || (s.size() == 4 && s[2] == 1 && s[3] == 1),
          "softmax_log_loss expects NxC logits, got " + shape_str(s));
    std::int64_t N = s[0], C = s[1];
    check(static_cast<std::int64_t>(targets.size()) == N,
          "softmax_log_loss: target count " + std::to_string(targets.size()) +
              " does not match batch " + std::to_string(N));
    for (int t : targets)
        check(t >= 0 && t < C, "softmax_log_loss: target " + std::to_string(t) +
                                   " out of range [0," + std::to_string(C - 1) + "]");
    auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N * C));
    T loss = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        const T* row = logits.data().data() + n * C;
        T mx = row[0];
        for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        T z = 0;
        for (std::int64_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
        T logz = std::log(z) + mx;
        for (std::int64_t c = 0; c < C; ++c) (*probs)[n * C + c] = std::exp(row[c] - logz);
        loss += logz - row[targets[static_cast<std::size_t>(n)]];
    }
    loss /= static_cast<T>(N);
    auto ln = logits.node();
    auto tgt = std::make_shared<std::vector<int>>(targets);
    return Tensor<T>::make_op({1}, {loss}, {logits},
        [ln, probs, tgt, N, C](typename Tensor<T>::Node& out) {
            ln->ensure_grad();
            T g = out.grad[0] / static_cast<T>(N);
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t c = 0; c < C; ++c) {
                    T d = (*probs)[n * C + c] -
                          (c == (*tgt)[static_cast<std::size_t>(n)] ? T(1) : T(0));
                    ln->grad[n * C + c] += g * d;
                }
        });
}

// softmax probabilities of a logits row, forward only
template <typename T>
std::vector<T> softmax_row(const T* row, std::int64_t C) {
    T mx = row[0];
    for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    T z = 0;
    for (std::int64_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
    std::vector<T> p(static_cast<std::size_t>(C));
    for (std::int64_t c = 0; c < C; ++c) p[static_cast<std::size_t>(c)] = std::exp(row[c] - mx) / z;
    return p;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
struct AdamState {
    T lr = T(2e-4);
    T beta1 = T(0.5);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    std::int64_t step = 0;
    std::vector<std::vector<T>> m, v;  // one pair per parameter, same order
};

// Bias-corrected Adam step over a named parameter list. Throws if a parameter
// has no populated gradient.
template <typename T>
void adam_update(std::vector<std::pair<std::string, Tensor<T>>>& params, AdamState<T>& state) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].second.data().size(), T(0));
            state.v[i].assign(params[i].second.data().size(), T(0));
        }
    }
    check(state.m.size() == params.size(), "adam_update: state/parameter count mismatch");
    state.step += 1;
    T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
    T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].second;
        check(p.grad().size() == p.data().size(),
              "adam_update: missing gradient for parameter '" + params[i].first + "'");
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.data().size(); ++j) {
            T g = p.grad()[j];
            m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * g * g;
            T mhat = m[j] / bc1;
            T vhat = v[j] / bc2;
            p.data()[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace adgan
