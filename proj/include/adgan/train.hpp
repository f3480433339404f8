#pragma once

// Alternating adversarial optimization: one discriminator step on a real
// batch plus an equally sized generated batch, then one generator step on a
// fresh generated batch. Model selection keeps the epoch with the lowest
// mean discriminator loss.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adgan/hsi.hpp"
#include "adgan/model.hpp"
#include "adgan/tensor.hpp"

namespace adgan {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 100;
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int checkpoint_every = 1;  // epochs; 0 disables periodic files
    std::filesystem::path checkpoint_dir;  // empty = keep checkpoints in memory only
    // fake-class sampling for generated batches: uniform over 1..K, or
    // matching the empirical train distribution
    bool match_empirical = false;
};

struct StepRecord {
    std::int64_t step = 0;
    double d_loss = 0.0, g_loss = 0.0;
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<double> epoch_d_loss;  // mean per epoch
    std::vector<double> epoch_g_loss;
    double wall_seconds = 0.0;
    int best_epoch = -1;

    void write_csv(const std::filesystem::path& p) const {
        std::ofstream f(p);
        f << "step,d_loss,g_loss\n";
        for (auto& s : steps) f << s.step << "," << s.d_loss << "," << s.g_loss << "\n";
    }
    nlohmann::json summary() const {
        return {{"steps", steps.size()},
                {"epochs", epoch_d_loss.size()},
                {"best_epoch", best_epoch},
                {"final_d_loss", epoch_d_loss.empty() ? 0.0 : epoch_d_loss.back()},
                {"final_g_loss", epoch_g_loss.empty() ? 0.0 : epoch_g_loss.back()},
                {"wall_seconds", wall_seconds}};
    }
};

template <typename T>
struct Trainer {
    Model<T>* model = nullptr;
    AdamState<T> d_state, g_state;
    std::int64_t step = 0;

    void init(Model<T>& m, const TrainConfig& cfg) {
        model = &m;
        for (auto* s : {&d_state, &g_state}) {
            s->lr = static_cast<T>(cfg.lr);
            s->beta1 = static_cast<T>(cfg.beta1);
            s->beta2 = static_cast<T>(cfg.beta2);
            s->eps = static_cast<T>(cfg.adam_eps);
        }
    }
};

// Draw fake-batch class targets.
inline std::vector<int> sample_fake_classes(std::int64_t n, int K, bool match_empirical,
                                            const std::vector<int>& empirical, Rng& rng) {
    std::vector<int> out(static_cast<std::size_t>(n));
    for (auto& c : out) {
        if (match_empirical && !empirical.empty())
            c = empirical[static_cast<std::size_t>(rng.below(empirical.size()))];
        else
            c = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
    }
    return out;
}

// One alternating step. Returns (d_loss, g_loss); throws on non-finite loss.
template <typename T>
std::pair<double, double> train_step(Trainer<T>& tr, const Tensor<T>& real_images,
                                     const std::vector<int>& labels, const TrainConfig& cfg) {
    Model<T>& m = *tr.model;
    check(m.training(), "train_step: model is not in training mode");
    const int K = m.spec().K;
    std::int64_t N = real_images.shape()[0];
    std::uint64_t sseed = derive_seed(cfg.seed, 0x57e9, static_cast<std::uint64_t>(tr.step));
    Rng rng(sseed);

    auto zero_all = [&](std::vector<std::pair<std::string, Tensor<T>>>& ps) {
        for (auto& [n_, p] : ps) p.zero_grad();
    };

    // --- discriminator update ---
    auto d_params = m.discriminator_params();
    auto g_params = m.generator_params();
    zero_all(d_params);
    zero_all(g_params);
    auto fake_classes = sample_fake_classes(N, K, cfg.match_empirical, labels, rng);
    Tensor<T> z = sample_noise<T>(N, m.spec().noise_dim, rng);
    Tensor<T> fake = m.generate(z, fake_classes, derive_seed(sseed, 1));
    // detach: the discriminator step must not push gradients into G
    Tensor<T> fake_detached = Tensor<T>::from(fake.shape(), fake.data());
    auto out_real = m.discriminate(real_images, derive_seed(sseed, 2));
    auto out_fake = m.discriminate(fake_detached, derive_seed(sseed, 3));
    Tensor<T> d_loss;
    switch (m.spec().loss_mode) {
        case LossMode::kAdgan:
            d_loss = adgan_d_loss(out_real.class_logits, labels, out_fake.class_logits, K);
            break;
        case LossMode::kAcgan: {
            auto o = acgan_losses(out_real.source_logits, out_fake.source_logits,
                                  out_real.class_logits, out_fake.class_logits, labels,
                                  fake_classes, K);
            d_loss = o.d_objective;
            break;
        }
        case LossMode::kVanilla:
            d_loss = vanilla_gan_losses(out_real.source_logits, out_fake.source_logits).d_loss;
            break;
    }
    double dl = static_cast<double>(d_loss.item());
    check(std::isfinite(dl), "train_step " + std::to_string(tr.step) + ": non-finite D loss");
    d_loss.backward();
    adam_update(d_params, tr.d_state);

    // --- generator update on a fresh generated batch ---
    zero_all(d_params);
    zero_all(g_params);
    auto g_classes = sample_fake_classes(N, K, cfg.match_empirical, labels, rng);
    Tensor<T> z2 = sample_noise<T>(N, m.spec().noise_dim, rng);
    Tensor<T> fake2 = m.generate(z2, g_classes, derive_seed(sseed, 4));
    auto out_fake2 = m.discriminate(fake2, derive_seed(sseed, 5));
    Tensor<T> g_loss;
    switch (m.spec().loss_mode) {
        case LossMode::kAdgan:
            g_loss = adgan_g_loss(out_fake2.class_logits, g_classes, K);
            break;
        case LossMode::kAcgan: {
            // real-batch heads are not part of the G objective; reuse fake-only terms
            std::vector<int> fool(static_cast<std::size_t>(N), kSourceReal);
            g_loss = add(softmax_log_loss(out_fake2.source_logits, fool),
                         softmax_log_loss(out_fake2.class_logits, to_internal(g_classes, K)));
            break;
        }
        case LossMode::kVanilla: {
            std::vector<int> fool(static_cast<std::size_t>(N), kSourceReal);
            g_loss = softmax_log_loss(out_fake2.source_logits, fool);
            break;
        }
    }
    double gl = static_cast<double>(g_loss.item());
    check(std::isfinite(gl), "train_step " + std::to_string(tr.step) + ": non-finite G loss");
    g_loss.backward();
    adam_update(g_params, tr.g_state);
    ++tr.step;
    return {dl, gl};
}

// Copy a batch of patches into an NCHW tensor.
template <typename T>
Tensor<T> batch_tensor(const PatchSet& ps, const std::vector<std::int64_t>& idx) {
    std::int64_t n = static_cast<std::int64_t>(idx.size());
    Tensor<T> t({n, ps.channels, ps.patch_size, ps.patch_size});
    std::size_t stride = ps.patch_stride();
    for (std::int64_t i = 0; i < n; ++i) {
        const float* src = ps.patch(idx[static_cast<std::size_t>(i)]);
        for (std::size_t j = 0; j < stride; ++j)
            t.data()[static_cast<std::size_t>(i) * stride + j] = static_cast<T>(src[j]);
    }
    return t;
}

template <typename T>
struct TrainResult {
    Model<T> best_model;
    TrainLog log;
};

// Full training run over shuffled mini-batches. Returns the epoch checkpoint
// with the lowest mean discriminator loss.
template <typename T>
TrainResult<T> train(Model<T>& model, const PatchSet& train_set, const TrainConfig& cfg) {
    check(train_set.count() > 0, "train: empty training set");
    check(cfg.epochs >= 1, "train: epochs must be >= 1");
    check(cfg.batch_size >= 2, "train: batch_size must be >= 2 (batch norm)");
    auto t0 = std::chrono::steady_clock::now();
    int batch = cfg.batch_size;
    if (batch > train_set.count()) {
        batch = static_cast<int>(train_set.count());
        // full-batch fallback; keep going rather than fail
        std::cerr << "warning: batch size reduced to " << batch << " (training set is smaller)\n";
    }
    Trainer<T> tr;
    tr.init(model, cfg);
    model.set_training(true);
    TrainResult<T> result;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::int64_t> order(static_cast<std::size_t>(train_set.count()));
    for (std::int64_t i = 0; i < train_set.count(); ++i) order[static_cast<std::size_t>(i)] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 0xe90c4, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        double ed = 0.0, eg = 0.0;
        int nb = 0;
        for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(batch)) {
            std::size_t end = std::min(off + static_cast<std::size_t>(batch), order.size());
            if (end - off < 2) break;  // batch norm needs at least 2 samples
            std::vector<std::int64_t> idx(order.begin() + static_cast<std::ptrdiff_t>(off),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
            Tensor<T> images = batch_tensor<T>(train_set, idx);
            std::vector<int> labels;
            labels.reserve(idx.size());
            for (auto i : idx) labels.push_back(train_set.labels[static_cast<std::size_t>(i)]);
            auto [dl, gl] = train_step(tr, images, labels, cfg);
            result.log.steps.push_back({tr.step, dl, gl});
            ed += dl;
            eg += gl;
            ++nb;
        }
        ed /= nb;
        eg /= nb;
        result.log.epoch_d_loss.push_back(ed);
        result.log.epoch_g_loss.push_back(eg);
        if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0) {
            save_checkpoint(cfg.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"),
                            model, tr.step, ed, eg);
        }
        if (ed < best) {
            best = ed;
            result.log.best_epoch = epoch;
            // deep-copy the current parameters so later epochs do not mutate
            // the selected snapshot
            auto tmp = std::filesystem::temp_directory_path() /
                       ("adgan_best_" + std::to_string(derive_seed(cfg.seed, 0xbe57)) + ".ckpt");
            save_checkpoint(tmp, model, tr.step, ed, eg);
            result.best_model = load_checkpoint<T>(tmp);
            std::filesystem::remove(tmp);
        }
    }
    result.log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace adgan
