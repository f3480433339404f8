#pragma once

// Generator / discriminator pair built from strided convolutions and batch
// norm, with three selectable adversarial objectives: the single-head
// (K+1)-way classifier ("adgan"), the two-head auxiliary classifier
// ("acgan"), and the plain real/fake game ("vanilla"). Class labels are 1..K
// at the API surface; internally classes are 0-based and the fake class is
// logit index K.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adgan/regularize.hpp"
#include "adgan/rng.hpp"
#include "adgan/tensor.hpp"

namespace adgan {

enum class LossMode { kAdgan, kAcgan, kVanilla };

inline std::string loss_mode_name(LossMode m) {
    switch (m) {
        case LossMode::kAdgan: return "adgan";
        case LossMode::kAcgan: return "acgan";
        case LossMode::kVanilla: return "vanilla";
    }
    return "?";
}

inline LossMode loss_mode_from_name(const std::string& s) {
    if (s == "adgan") return LossMode::kAdgan;
    if (s == "acgan") return LossMode::kAcgan;
    if (s == "vanilla") return LossMode::kVanilla;
    throw std::invalid_argument("unknown loss mode '" + s + "'");
}

struct ModelSpec {
    int S = 27;           // patch / generated image side
    int K = 3;            // real class count
    int depth = 5;        // conv layers per network
    int noise_dim = 100;
    int channels = 3;
    int g_top = 256;      // widest generator layer
    int d_base = 32;      // first discriminator layer width
    LossMode loss_mode = LossMode::kAdgan;
    RegularizerConfig reg;
    int g_reg_layer = 2;  // 1-based conv layer carrying the regularizer
    int d_reg_layer = 4;
    bool reg_enabled = true;
};

// one conv geometry step
struct ConvGeom {
    int kernel = 0, stride = 0, pad = 0;
    int in_size = 0, out_size = 0;
};

// Downsampling schedule S -> 1 in `depth` conv layers. Each step halves
// (rounding up) until the tail layers finish at 1x1; every step is exactly
// invertible by a transposed convolution with the same geometry.
inline std::vector<ConvGeom> conv_schedule(int S, int depth) {
    check(S >= 1 && depth >= 1, "conv_schedule: S and depth must be positive");
    std::vector<ConvGeom> geoms;
    int size = S;
    for (int i = 0; i < depth; ++i) {
        int remaining = depth - i;
        ConvGeom g;
        g.in_size = size;
        if (remaining == 1) {
            g = {size, 1, 0, size, 1};
            size = 1;
        } else if (size == 1) {
            g = {1, 1, 0, 1, 1};
        } else if (size == 2) {
            g = {4, 2, 1, 2, 1};
            size = 1;
        } else if (size % 2 == 0) {
            g = {4, 2, 1, size, size / 2};
            size /= 2;
        } else {
            g = {3, 2, 1, size, (size + 1) / 2};
            size = (size + 1) / 2;
        }
        geoms.push_back(g);
    }
    return geoms;
}

template <typename T>
struct Layer {
    Tensor<T> kernel;  // OIHW, or (I,O,kh,kw) when transposed
    Tensor<T> bias;    // only when !has_bn
    Tensor<T> gamma, beta;
    std::vector<T> run_mean, run_var;
    int stride = 1, pad = 0;
    bool transposed = false;
    bool has_bn = false;
    // 0 none, 1 leaky relu, 2 relu, 3 tanh scaled to [-0.5, 0.5]
    int act = 0;
    T slope = T(0.2);
};

template <typename T>
Layer<T> make_layer(int in_ch, int out_ch, const ConvGeom& g, bool transposed, bool bn, int act,
                    Rng& rng) {
    Layer<T> l;
    l.stride = g.stride;
    l.pad = g.pad;
    l.transposed = transposed;
    l.has_bn = bn;
    l.act = act;
    Shape ks = transposed ? Shape{in_ch, out_ch, g.kernel, g.kernel}
                          : Shape{out_ch, in_ch, g.kernel, g.kernel};
    l.kernel = Tensor<T>(ks, true);
    for (auto& v : l.kernel.data()) v = static_cast<T>(0.02 * rng.gaussian());
    if (bn) {
        l.gamma = Tensor<T>::from({out_ch}, std::vector<T>(static_cast<std::size_t>(out_ch), T(1)), true);
        l.beta = Tensor<T>({out_ch}, true);
        l.run_mean.assign(static_cast<std::size_t>(out_ch), T(0));
        l.run_var.assign(static_cast<std::size_t>(out_ch), T(1));
    } else {
        l.bias = Tensor<T>({out_ch}, true);
    }
    return l;
}

template <typename T>
Tensor<T> apply_layer(Layer<T>& l, const Tensor<T>& x, bool train, T momentum = T(0.1),
                      T eps = T(1e-5)) {
    Tensor<T> y = l.transposed ? conv_transpose2d(x, l.kernel, l.stride, l.pad)
                               : conv2d(x, l.kernel, l.stride, l.pad);
    if (l.has_bn)
        y = batch_norm(y, l.gamma, l.beta, l.run_mean, l.run_var,
                       train ? NormMode::kTrain : NormMode::kEval, momentum, eps);
    else
        y = add_channel_bias(y, l.bias);
    if (l.act == 1) y = leaky_relu(y, l.slope);
    if (l.act == 2) y = relu(y);
    if (l.act == 3) y = scale(tanh_act(y), T(0.5));
    return y;
}

// discriminator outputs; which tensors are defined depends on the loss mode
template <typename T>
struct DiscOut {
    Tensor<T> class_logits;   // adgan: N x (K+1); acgan: N x K
    Tensor<T> source_logits;  // acgan / vanilla: N x 2 (0 = real, 1 = fake)
};

template <typename T>
class Model {
  public:
    Model() = default;
    Model(ModelSpec spec, std::uint64_t seed) : spec_(spec) {
        check(spec.K >= 1, "model: K must be >= 1");
        check(spec.depth >= 2, "model: depth must be >= 2");
        Rng rng(derive_seed(seed, 0xad6a11));
        auto geoms = conv_schedule(spec.S, spec.depth);
        // generator: reversed schedule, transposed convs, 1x1 -> SxS
        int in_ch = spec.noise_dim + spec.K;
        for (int i = 0; i < spec.depth; ++i) {
            const ConvGeom& g = geoms[static_cast<std::size_t>(spec.depth - 1 - i)];
            bool last = i == spec.depth - 1;
            int out_ch = last ? spec.channels : g_width(i);
            g_layers_.push_back(
                make_layer<T>(in_ch, out_ch, g, true, !last, last ? 3 : 2, rng));
            in_ch = out_ch;
        }
        // discriminator trunk + heads
        in_ch = spec.channels;
        for (int i = 0; i + 1 < spec.depth; ++i) {
            const ConvGeom& g = geoms[static_cast<std::size_t>(i)];
            int out_ch = d_width(i);
            // DCGAN convention: no batch norm on the first discriminator layer
            d_trunk_.push_back(make_layer<T>(in_ch, out_ch, g, false, i > 0, 1, rng));
            in_ch = out_ch;
        }
        const ConvGeom& hg = geoms[static_cast<std::size_t>(spec.depth - 1)];
        if (spec.loss_mode == LossMode::kAdgan)
            d_head_class_ = make_layer<T>(in_ch, spec.K + 1, hg, false, false, 0, rng);
        if (spec.loss_mode == LossMode::kAcgan)
            d_head_class_ = make_layer<T>(in_ch, spec.K, hg, false, false, 0, rng);
        if (spec.loss_mode != LossMode::kAdgan)
            d_head_source_ = make_layer<T>(in_ch, 2, hg, false, false, 0, rng);
        // resolve regularizer placement against actual feature-map sizes
        std::vector<int> g_planes, d_planes;
        for (int i = 0; i + 1 < spec.depth; ++i) {
            g_planes.push_back(geoms[static_cast<std::size_t>(spec.depth - 1 - i)].in_size);
            d_planes.push_back(geoms[static_cast<std::size_t>(i)].out_size);
        }
        g_reg_idx_ = effective_reg_layer(g_planes, spec.g_reg_layer);
        d_reg_idx_ = effective_reg_layer(d_planes, spec.d_reg_layer);
    }

    const ModelSpec& spec() const { return spec_; }
    bool training() const { return training_; }
    void set_training(bool t) { training_ = t; }

    // z: N x noise_dim x 1 x 1, classes: 1..K. Conditions by concatenating a
    // one-hot class vector along channels.
    Tensor<T> generate(const Tensor<T>& z, const std::vector<int>& classes,
                       std::uint64_t step_seed = 0) {
        check(z.shape().size() == 4 && z.shape()[1] == spec_.noise_dim && z.shape()[2] == 1 &&
                  z.shape()[3] == 1,
              "generate: expected Nx" + std::to_string(spec_.noise_dim) + "x1x1 noise, got " +
                  shape_str(z.shape()));
        std::int64_t N = z.shape()[0];
        check(static_cast<std::int64_t>(classes.size()) == N,
              "generate: class count does not match batch");
        Tensor<T> onehot({N, spec_.K, 1, 1});
        for (std::int64_t n = 0; n < N; ++n) {
            int c = classes[static_cast<std::size_t>(n)];
            check(c >= 1 && c <= spec_.K,
                  "generate: class id " + std::to_string(c) + " outside 1.." +
                      std::to_string(spec_.K));
            onehot.data()[n * spec_.K + (c - 1)] = T(1);
        }
        Tensor<T> h = concat_channels(z, onehot);
        for (int i = 0; i < spec_.depth; ++i) {
            h = apply_layer(g_layers_[static_cast<std::size_t>(i)], h, training_);
            if (reg_active() && i == g_reg_idx_)
                h = regularize(h, spec_.reg, derive_seed(step_seed, 0x6e, static_cast<std::uint64_t>(i)),
                               training_);
        }
        return h;
    }

    DiscOut<T> discriminate(const Tensor<T>& x, std::uint64_t step_seed = 0) {
        check(x.shape().size() == 4 && x.shape()[1] == spec_.channels &&
                  x.shape()[2] == spec_.S && x.shape()[3] == spec_.S,
              "discriminate: expected Nx" + std::to_string(spec_.channels) + "x" +
                  std::to_string(spec_.S) + "x" + std::to_string(spec_.S) + " input, got " +
                  shape_str(x.shape()));
        Tensor<T> h = x;
        for (std::size_t i = 0; i < d_trunk_.size(); ++i) {
            h = apply_layer(d_trunk_[i], h, training_);
            if (reg_active() && static_cast<int>(i) == d_reg_idx_)
                h = regularize(h, spec_.reg, derive_seed(step_seed, 0xd, static_cast<std::uint64_t>(i)),
                               training_);
        }
        DiscOut<T> out;
        std::int64_t N = x.shape()[0];
        if (spec_.loss_mode != LossMode::kVanilla) {
            Tensor<T> c = apply_layer(d_head_class_, h, training_);
            out.class_logits = reshape(c, {N, c.shape()[1]});
        }
        if (spec_.loss_mode != LossMode::kAdgan) {
            Tensor<T> s = apply_layer(d_head_source_, h, training_);
            out.source_logits = reshape(s, {N, 2});
        }
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>>> generator_params() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t i = 0; i < g_layers_.size(); ++i)
            collect(out, "g." + std::to_string(i), g_layers_[i]);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>>> discriminator_params() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t i = 0; i < d_trunk_.size(); ++i)
            collect(out, "d." + std::to_string(i), d_trunk_[i]);
        if (d_head_class_.kernel.defined()) collect(out, "d.head_class", d_head_class_);
        if (d_head_source_.kernel.defined()) collect(out, "d.head_source", d_head_source_);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>>> all_params() {
        auto out = generator_params();
        auto d = discriminator_params();
        out.insert(out.end(), d.begin(), d.end());
        return out;
    }

    // running batch-norm statistics, in a stable order
    std::vector<std::vector<T>*> running_stats() {
        std::vector<std::vector<T>*> out;
        for (auto& l : g_layers_)
            if (l.has_bn) {
                out.push_back(&l.run_mean);
                out.push_back(&l.run_var);
            }
        for (auto& l : d_trunk_)
            if (l.has_bn) {
                out.push_back(&l.run_mean);
                out.push_back(&l.run_var);
            }
        return out;
    }

  private:
    // Choose the 0-based hidden layer carrying the regularizer: the
    // configured layer when its feature map fits the block, otherwise the
    // nearest hidden layer whose map is at least b_size wide (block
    // regularizers are undefined on smaller planes); -1 disables it.
    int effective_reg_layer(const std::vector<int>& planes, int configured) const {
        int want = configured - 1;
        if (spec_.reg.kind == RegKind::kDropout || spec_.reg.kind == RegKind::kNone)
            return want >= 0 && want < static_cast<int>(planes.size()) ? want : -1;
        int best = -1;
        for (int i = 0; i < static_cast<int>(planes.size()); ++i) {
            if (planes[static_cast<std::size_t>(i)] < spec_.reg.b_size) continue;
            if (best == -1 || std::abs(i - want) < std::abs(best - want)) best = i;
        }
        return best;
    }

    int g_width(int i) const { return std::max(spec_.g_top >> i, 8); }
    int d_width(int i) const { return std::min(spec_.d_base << i, 1024); }
    bool reg_active() const { return spec_.reg_enabled && spec_.reg.kind != RegKind::kNone; }

    static void collect(std::vector<std::pair<std::string, Tensor<T>>>& out,
                        const std::string& prefix, Layer<T>& l) {
        out.emplace_back(prefix + ".kernel", l.kernel);
        if (l.bias.defined()) out.emplace_back(prefix + ".bias", l.bias);
        if (l.has_bn) {
            out.emplace_back(prefix + ".gamma", l.gamma);
            out.emplace_back(prefix + ".beta", l.beta);
        }
    }

    ModelSpec spec_;
    bool training_ = true;
    std::vector<Layer<T>> g_layers_;
    std::vector<Layer<T>> d_trunk_;
    Layer<T> d_head_class_;
    Layer<T> d_head_source_;
    int g_reg_idx_ = -1;
    int d_reg_idx_ = -1;
};

template <typename T>
Tensor<T> sample_noise(std::int64_t n, int noise_dim, Rng& rng) {
    Tensor<T> z({n, noise_dim, 1, 1});
    for (auto& v : z.data()) v = static_cast<T>(rng.gaussian());
    return z;
}

// ---------------------------------------------------------------------------
// losses (all returned as minimization targets)

// labels are 1..K; targets shift to 0-based, fake class is index K.
inline std::vector<int> to_internal(const std::vector<int>& labels, int K) {
    std::vector<int> t(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        check(labels[i] >= 1 && labels[i] <= K,
              "label " + std::to_string(labels[i]) + " outside 1.." + std::to_string(K));
        t[i] = labels[i] - 1;
    }
    return t;
}

// Discriminator objective of the single-head game: classify real samples as
// their class and generated samples as the fake class.
template <typename T>
Tensor<T> adgan_d_loss(const Tensor<T>& logits_real, const std::vector<int>& labels,
                       const Tensor<T>& logits_fake, int K) {
    auto real_t = to_internal(labels, K);
    std::vector<int> fake_t(static_cast<std::size_t>(logits_fake.shape()[0]), K);
    return add(softmax_log_loss(logits_real, real_t), softmax_log_loss(logits_fake, fake_t));
}

// Generator objective: make the discriminator assign the desired class to the
// generated samples. The fake class is not a valid target.
template <typename T>
Tensor<T> adgan_g_loss(const Tensor<T>& logits_fake, const std::vector<int>& desired, int K) {
    for (int c : desired)
        check(c >= 1 && c <= K, "adgan_g_loss: desired class " + std::to_string(c) +
                                    " must be a real class in 1.." + std::to_string(K));
    return softmax_log_loss(logits_fake, to_internal(desired, K));
}

template <typename T>
struct AcganObjectives {
    Tensor<T> source_real, source_fake;  // cross-entropies behind L_S
    Tensor<T> class_real, class_fake;    // cross-entropies behind L_C
    Tensor<T> d_objective;  // minimize: -(L_S + L_C)
    Tensor<T> g_objective;  // minimize: -(L_C - L_S), literal form
    Tensor<T> g_objective_nonsat;  // non-saturating source term, used by training
};

inline constexpr int kSourceReal = 0;
inline constexpr int kSourceFake = 1;

template <typename T>
AcganObjectives<T> acgan_losses(const Tensor<T>& src_real, const Tensor<T>& src_fake,
                                const Tensor<T>& cls_real, const Tensor<T>& cls_fake,
                                const std::vector<int>& labels_real,
                                const std::vector<int>& labels_fake, int K) {
    AcganObjectives<T> o;
    std::vector<int> real_t(static_cast<std::size_t>(src_real.shape()[0]), kSourceReal);
    std::vector<int> fake_t(static_cast<std::size_t>(src_fake.shape()[0]), kSourceFake);
    o.source_real = softmax_log_loss(src_real, real_t);
    o.source_fake = softmax_log_loss(src_fake, fake_t);
    o.class_real = softmax_log_loss(cls_real, to_internal(labels_real, K));
    o.class_fake = softmax_log_loss(cls_fake, to_internal(labels_fake, K));
    Tensor<T> ls = add(o.source_real, o.source_fake);
    o.d_objective = add(add(ls, o.class_real), o.class_fake);
    o.g_objective = add(scale(o.source_fake, T(-1)), o.class_fake);
    std::vector<int> fool_t(static_cast<std::size_t>(src_fake.shape()[0]), kSourceReal);
    o.g_objective_nonsat = add(softmax_log_loss(src_fake, fool_t), o.class_fake);
    return o;
}

template <typename T>
struct VanillaObjectives {
    Tensor<T> d_loss;  // CE(real->real) + CE(fake->fake)
    Tensor<T> g_loss;  // CE(fake->real), non-saturating
};

template <typename T>
VanillaObjectives<T> vanilla_gan_losses(const Tensor<T>& src_real, const Tensor<T>& src_fake) {
    VanillaObjectives<T> o;
    std::vector<int> real_t(static_cast<std::size_t>(src_real.shape()[0]), kSourceReal);
    std::vector<int> fake_t(static_cast<std::size_t>(src_fake.shape()[0]), kSourceFake);
    std::vector<int> fool_t(static_cast<std::size_t>(src_fake.shape()[0]), kSourceReal);
    o.d_loss = add(softmax_log_loss(src_real, real_t), softmax_log_loss(src_fake, fake_t));
    o.g_loss = softmax_log_loss(src_fake, fool_t);
    return o;
}

// ---------------------------------------------------------------------------
// checkpoints: JSON meta header + raw little-endian parameter payload

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Model<T>& model, std::int64_t step,
                     double d_loss, double g_loss) {
    nlohmann::json meta;
    meta["version"] = 1;
    meta["step"] = step;
    meta["d_loss"] = d_loss;
    meta["g_loss"] = g_loss;
    const ModelSpec& s = model.spec();
    meta["spec"] = {{"S", s.S},           {"K", s.K},
                    {"depth", s.depth},   {"noise_dim", s.noise_dim},
                    {"channels", s.channels}, {"g_top", s.g_top},
                    {"d_base", s.d_base}, {"loss_mode", loss_mode_name(s.loss_mode)},
                    {"g_reg_layer", s.g_reg_layer}, {"d_reg_layer", s.d_reg_layer},
                    {"reg_enabled", s.reg_enabled},
                    {"reg", {{"kind", reg_kind_name(s.reg.kind)},
                             {"b_size", s.reg.b_size},
                             {"k", s.reg.k},
                             {"keep_prob", s.reg.keep_prob},
                             {"dropout_p", s.reg.dropout_p},
                             {"denormalize_after_drop", s.reg.denormalize_after_drop}}}};
    auto params = model.all_params();
    nlohmann::json names = nlohmann::json::array();
    for (auto& [name, t] : params) names.push_back({{"name", name}, {"shape", t.shape()}});
    meta["params"] = names;
    meta["scalar_bytes"] = sizeof(T);
    std::string header = meta.dump();
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "cannot open checkpoint " + path.string() + " for writing");
    const char magic[8] = {'A', 'D', 'G', 'N', 'C', 'K', 'P', '1'};
    f.write(magic, 8);
    std::uint64_t hlen = header.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (auto& [name, t] : params)
        f.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.data().size() * sizeof(T)));
    for (auto* rs : model.running_stats())
        f.write(reinterpret_cast<const char*>(rs->data()),
                static_cast<std::streamsize>(rs->size() * sizeof(T)));
    check(f.good(), "checkpoint write failed for " + path.string());
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, std::int64_t* step_out = nullptr,
                         double* d_loss_out = nullptr) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "cannot open checkpoint " + path.string());
    char magic[8];
    f.read(magic, 8);
    check(f.good() && std::string(magic, 8) == "ADGNCKP1",
          "bad checkpoint magic in " + path.string());
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string header(hlen, '\0');
    f.read(header.data(), static_cast<std::streamsize>(hlen));
    check(f.good(), "truncated checkpoint header in " + path.string());
    nlohmann::json meta = nlohmann::json::parse(header);
    check(meta.value("version", 0) == 1, "unknown checkpoint version");
    check(meta.value("scalar_bytes", 0) == static_cast<int>(sizeof(T)),
          "checkpoint scalar width mismatch");
    ModelSpec s;
    auto& js = meta.at("spec");
    s.S = js.at("S");
    s.K = js.at("K");
    s.depth = js.at("depth");
    s.noise_dim = js.at("noise_dim");
    s.channels = js.at("channels");
    s.g_top = js.at("g_top");
    s.d_base = js.at("d_base");
    s.loss_mode = loss_mode_from_name(js.at("loss_mode"));
    s.g_reg_layer = js.at("g_reg_layer");
    s.d_reg_layer = js.at("d_reg_layer");
    s.reg_enabled = js.at("reg_enabled");
    auto& jr = js.at("reg");
    s.reg.kind = reg_kind_from_name(jr.at("kind"));
    s.reg.b_size = jr.at("b_size");
    s.reg.k = jr.at("k");
    s.reg.keep_prob = jr.at("keep_prob");
    s.reg.dropout_p = jr.at("dropout_p");
    s.reg.denormalize_after_drop = jr.at("denormalize_after_drop");
    Model<T> model(s, 0);
    auto params = model.all_params();
    check(meta.at("params").size() == params.size(), "checkpoint parameter list mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        check(meta.at("params")[i].at("name") == params[i].first,
              "checkpoint parameter order mismatch at " + params[i].first);
        f.read(reinterpret_cast<char*>(params[i].second.data().data()),
               static_cast<std::streamsize>(params[i].second.data().size() * sizeof(T)));
    }
    for (auto* rs : model.running_stats())
        f.read(reinterpret_cast<char*>(rs->data()),
               static_cast<std::streamsize>(rs->size() * sizeof(T)));
    check(f.good(), "truncated checkpoint payload in " + path.string());
    for (auto& [name, t] : params)
        for (T v : t.data())
            check(std::isfinite(static_cast<double>(v)), "non-finite parameter " + name);
    if (step_out) *step_out = meta.value("step", 0);
    if (d_loss_out) *d_loss_out = meta.value("d_loss", 0.0);
    return model;
}

}  // namespace adgan
