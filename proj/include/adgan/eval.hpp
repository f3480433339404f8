#pragma once

// Scene classification, OA/AA/kappa metrics, classification-map rendering,
// and generated-sample inspection.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adgan/hsi.hpp"
#include "adgan/image_io.hpp"
#include "adgan/model.hpp"
#include "adgan/train.hpp"

namespace adgan {

struct ConfusionMatrix {
    int K = 0;
    std::vector<std::int64_t> counts;  // K x K, rows = reference, cols = predicted

    explicit ConfusionMatrix(int k = 0) : K(k), counts(static_cast<std::size_t>(k) * k, 0) {}
    std::int64_t& at(int ref, int pred) {
        return counts[static_cast<std::size_t>(ref) * K + pred];
    }
    std::int64_t at(int ref, int pred) const {
        return counts[static_cast<std::size_t>(ref) * K + pred];
    }
    std::int64_t total() const {
        std::int64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
};

struct MetricsReport {
    double oa = 0.0, aa = 0.0, kappa = 0.0;
    std::vector<double> per_class;  // NaN for classes with no reference samples
    std::int64_t total = 0;

    nlohmann::json to_json() const {
        nlohmann::json pc = nlohmann::json::array();
        for (double v : per_class)
            pc.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
        return {{"oa", oa}, {"aa", aa}, {"kappa", kappa}, {"per_class", pc}, {"total", total}};
    }
};

// OA = trace/total; per-class accuracy = diagonal/row-sum (empty rows are
// excluded from AA); kappa = (p_o - p_e)/(1 - p_e), with the degenerate
// p_e == 1 case mapped to 1 when agreement is perfect and 0 otherwise.
inline MetricsReport metrics(const ConfusionMatrix& cm) {
    std::int64_t total = cm.total();
    check(total > 0, "metrics: empty confusion matrix");
    MetricsReport r;
    r.total = total;
    std::int64_t diag = 0;
    double aa_sum = 0.0;
    int aa_n = 0;
    for (int i = 0; i < cm.K; ++i) {
        diag += cm.at(i, i);
        std::int64_t row = 0;
        for (int j = 0; j < cm.K; ++j) row += cm.at(i, j);
        if (row == 0) {
            r.per_class.push_back(std::numeric_limits<double>::quiet_NaN());
        } else {
            double acc = static_cast<double>(cm.at(i, i)) / static_cast<double>(row);
            r.per_class.push_back(acc);
            aa_sum += acc;
            ++aa_n;
        }
    }
    r.oa = static_cast<double>(diag) / static_cast<double>(total);
    r.aa = aa_n > 0 ? aa_sum / aa_n : 0.0;
    double pe = 0.0;
    for (int i = 0; i < cm.K; ++i) {
        std::int64_t row = 0, col = 0;
        for (int j = 0; j < cm.K; ++j) {
            row += cm.at(i, j);
            col += cm.at(j, i);
        }
        pe += static_cast<double>(row) * static_cast<double>(col);
    }
    pe /= static_cast<double>(total) * static_cast<double>(total);
    if (pe >= 1.0)
        r.kappa = r.oa == 1.0 ? 1.0 : 0.0;
    else
        r.kappa = (r.oa - pe) / (1.0 - pe);
    return r;
}

// ---------------------------------------------------------------------------
// scene classification

struct SceneResult {
    LabelRaster prediction;  // 0 where unlabeled
    ConfusionMatrix cm;
};

// Classify the labeled pixels of a prepared (3-band, normalized) cube in
// batches. The fake logit is excluded from the argmax by default since test
// pixels are real by construction; include_fake_logit enables (K+1)-way
// argmax for ablation.
template <typename T>
SceneResult classify_scene(Model<T>& model, const HsiCube& cube3, const LabelRaster& labels,
                           const std::vector<std::pair<int, int>>* pixels = nullptr,
                           int batch = 100, bool include_fake_logit = false) {
    check(!model.training(),
          "classify_scene: model is in training mode; switch to eval before classifying");
    const ModelSpec& spec = model.spec();
    for (auto& [name, t] : model.all_params())
        for (T v : t.data())
            check(std::isfinite(static_cast<double>(v)), "classify_scene: non-finite parameter " + name);
    PatchSet all = extract_patches(cube3, labels, spec.S);
    std::vector<std::int64_t> wanted;
    if (pixels) {
        std::map<std::pair<int, int>, std::int64_t> index;
        for (std::int64_t i = 0; i < all.count(); ++i)
            index[all.centers[static_cast<std::size_t>(i)]] = i;
        for (auto& p : *pixels) {
            auto it = index.find(p);
            check(it != index.end(), "classify_scene: pixel (" + std::to_string(p.first) + "," +
                                         std::to_string(p.second) + ") is not labeled");
            wanted.push_back(it->second);
        }
    } else {
        for (std::int64_t i = 0; i < all.count(); ++i) wanted.push_back(i);
    }
    check(spec.loss_mode != LossMode::kVanilla,
          "classify_scene: vanilla loss mode has no class head");
    SceneResult res{LabelRaster{labels.width, labels.height,
                                std::vector<std::uint16_t>(labels.labels.size(), 0)},
                    ConfusionMatrix(spec.K)};
    for (std::size_t off = 0; off < wanted.size(); off += static_cast<std::size_t>(batch)) {
        std::size_t end = std::min(off + static_cast<std::size_t>(batch), wanted.size());
        std::vector<std::int64_t> idx(wanted.begin() + static_cast<std::ptrdiff_t>(off),
                                      wanted.begin() + static_cast<std::ptrdiff_t>(end));
        Tensor<T> images = batch_tensor<T>(all, idx);
        auto out = model.discriminate(images);
        const Tensor<T>& logits = out.class_logits;
        std::int64_t C = logits.shape()[1];
        std::int64_t limit = include_fake_logit ? C : std::min<std::int64_t>(C, spec.K);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const T* row = logits.data().data() + static_cast<std::int64_t>(i) * C;
            int arg = 0;
            for (std::int64_t c = 1; c < limit; ++c)
                if (row[c] > row[arg]) arg = static_cast<int>(c);
            auto [x, y] = all.centers[static_cast<std::size_t>(idx[i])];
            // in (K+1)-way mode an argmax on the fake logit is reported as 0
            int pred = arg == spec.K ? 0 : arg + 1;
            res.prediction.labels[static_cast<std::size_t>(y) * labels.width + x] =
                static_cast<std::uint16_t>(pred);
            int ref = all.labels[static_cast<std::size_t>(idx[i])];
            if (pred >= 1) res.cm.at(ref - 1, pred - 1) += 1;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// rendering

using Palette = std::vector<std::array<std::uint8_t, 3>>;  // index 0..K, 0 = unlabeled

inline Palette default_palette(int K) {
    Palette p;
    p.push_back({0, 0, 0});
    for (int c = 0; c < K; ++c) {
        // well-spaced hues
        double h = std::fmod(0.61803398875 * c, 1.0) * 6.0;
        double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
        double rgb[3] = {0, 0, 0};
        int hi = static_cast<int>(h);
        switch (hi) {
            case 0: rgb[0] = 1; rgb[1] = x; break;
            case 1: rgb[0] = x; rgb[1] = 1; break;
            case 2: rgb[1] = 1; rgb[2] = x; break;
            case 3: rgb[1] = x; rgb[2] = 1; break;
            case 4: rgb[0] = x; rgb[2] = 1; break;
            default: rgb[0] = 1; rgb[2] = x; break;
        }
        p.push_back({static_cast<std::uint8_t>(55 + 200 * rgb[0]),
                     static_cast<std::uint8_t>(55 + 200 * rgb[1]),
                     static_cast<std::uint8_t>(55 + 200 * rgb[2])});
    }
    return p;
}

inline void save_palette(const std::filesystem::path& p, const Palette& pal) {
    std::ofstream f(p);
    for (auto& c : pal) f << int(c[0]) << " " << int(c[1]) << " " << int(c[2]) << "\n";
}

inline Palette load_palette(const std::filesystem::path& p) {
    std::ifstream f(p);
    check(f.good(), "cannot open palette " + p.string());
    Palette pal;
    int r, g, b;
    while (f >> r >> g >> b)
        pal.push_back({static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                       static_cast<std::uint8_t>(b)});
    return pal;
}

inline RgbImage render_map(const LabelRaster& raster, const Palette& palette) {
    check(static_cast<int>(palette.size()) > raster.max_class(),
          "render_map: palette has " + std::to_string(palette.size()) +
              " entries but classes go up to " + std::to_string(raster.max_class()));
    RgbImage img;
    img.width = raster.width;
    img.height = raster.height;
    img.pixels.resize(static_cast<std::size_t>(raster.width) * raster.height * 3);
    for (std::size_t i = 0; i < raster.labels.size(); ++i) {
        auto& c = palette[raster.labels[i]];
        img.pixels[i * 3] = c[0];
        img.pixels[i * 3 + 1] = c[1];
        img.pixels[i * 3 + 2] = c[2];
    }
    return img;
}

// Inverse of render_map for palettes with distinct colors.
inline LabelRaster decode_map(const RgbImage& img, const Palette& palette) {
    LabelRaster r;
    r.width = img.width;
    r.height = img.height;
    r.labels.resize(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        int found = -1;
        for (std::size_t c = 0; c < palette.size(); ++c)
            if (palette[c][0] == img.pixels[i * 3] && palette[c][1] == img.pixels[i * 3 + 1] &&
                palette[c][2] == img.pixels[i * 3 + 2]) {
                found = static_cast<int>(c);
                break;
            }
        check(found >= 0, "decode_map: pixel color not in palette");
        r.labels[i] = static_cast<std::uint16_t>(found);
    }
    return r;
}

// ---------------------------------------------------------------------------
// generated-sample inspection

// Grid of generated samples: one row per requested class, n columns.
// Values map from [-0.5, 0.5] to [0, 255].
template <typename T>
RgbImage sample_grid(Model<T>& model, const std::vector<int>& classes, int n,
                     std::uint64_t seed) {
    check(n >= 1, "sample_grid: need at least one sample per class");
    const ModelSpec& spec = model.spec();
    check(spec.channels == 3, "sample_grid: needs a 3-channel model");
    int S = spec.S;
    RgbImage img;
    img.width = n * S;
    img.height = static_cast<int>(classes.size()) * S;
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
    bool was_training = model.training();
    model.set_training(false);
    Rng rng(derive_seed(seed, 0x99a1d));
    for (std::size_t row = 0; row < classes.size(); ++row) {
        Tensor<T> z = sample_noise<T>(n, spec.noise_dim, rng);
        std::vector<int> cs(static_cast<std::size_t>(n), classes[row]);
        Tensor<T> samples = model.generate(z, cs);
        for (int col = 0; col < n; ++col)
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x)
                    for (int ch = 0; ch < 3; ++ch) {
                        double v = samples.data()[((static_cast<std::int64_t>(col) * 3 + ch) * S + y) * S + x];
                        double u = std::clamp((v + 0.5) * 255.0, 0.0, 255.0);
                        std::size_t px = (static_cast<std::size_t>(row * S + y) * img.width +
                                          col * S + x) * 3 + ch;
                        img.pixels[px] = static_cast<std::uint8_t>(std::lround(u));
                    }
    }
    model.set_training(was_training);
    return img;
}

struct DiversityReport {
    double mean_pairwise = 0.0;       // among generated samples
    double nearest_real_mean = 0.0;   // mean distance to closest real sample
    int n = 0;

    nlohmann::json to_json() const {
        return {{"mean_pairwise_distance", mean_pairwise},
                {"nearest_real_mean_distance", nearest_real_mean},
                {"samples", n}};
    }
};

// Mode-collapse diagnostic: mean pairwise Euclidean distance between n
// generated samples of one class, plus the mean nearest-real-neighbor
// distance when a real set is supplied.
template <typename T>
DiversityReport diversity_report(Model<T>& model, int cls, int n, std::uint64_t seed,
                                 const PatchSet* real = nullptr) {
    check(n >= 2, "diversity_report: need n >= 2 samples");
    const ModelSpec& spec = model.spec();
    bool was_training = model.training();
    model.set_training(false);
    Rng rng(derive_seed(seed, 0xd1f));
    Tensor<T> z = sample_noise<T>(n, spec.noise_dim, rng);
    std::vector<int> cs(static_cast<std::size_t>(n), cls);
    Tensor<T> samples = model.generate(z, cs);
    model.set_training(was_training);
    std::size_t dim = static_cast<std::size_t>(spec.channels) * spec.S * spec.S;
    auto dist = [&](const T* a, const T* b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            acc += d * d;
        }
        return std::sqrt(acc);
    };
    DiversityReport rep;
    rep.n = n;
    double sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            sum += dist(samples.data().data() + i * dim, samples.data().data() + j * dim);
            ++pairs;
        }
    rep.mean_pairwise = sum / pairs;
    if (real && real->count() > 0) {
        check(real->patch_stride() == dim, "diversity_report: real patch shape mismatch");
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::int64_t r = 0; r < real->count(); ++r) {
                std::vector<T> tmp(dim);
                const float* rp = real->patch(r);
                for (std::size_t q = 0; q < dim; ++q) tmp[q] = static_cast<T>(rp[q]);
                best = std::min(best, dist(samples.data().data() + i * dim, tmp.data()));
            }
            acc += best;
        }
        rep.nearest_real_mean = acc / n;
    }
    return rep;
}

// Mean pairwise distance among real patches of one class; reference scale for
// the diversity diagnostic.
inline double real_within_class_distance(const PatchSet& ps, int cls, int max_samples = 64) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = 0; i < ps.count(); ++i)
        if (ps.labels[static_cast<std::size_t>(i)] == cls) idx.push_back(i);
    if (idx.size() > static_cast<std::size_t>(max_samples)) idx.resize(static_cast<std::size_t>(max_samples));
    check(idx.size() >= 2, "real_within_class_distance: class " + std::to_string(cls) +
                               " has fewer than 2 samples");
    std::size_t dim = ps.patch_stride();
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = i + 1; j < idx.size(); ++j) {
            double acc = 0.0;
            const float* a = ps.patch(idx[i]);
            const float* b = ps.patch(idx[j]);
            for (std::size_t q = 0; q < dim; ++q) {
                double d = a[q] - b[q];
                acc += d * d;
            }
            sum += std::sqrt(acc);
            ++pairs;
        }
    return sum / pairs;
}

}  // namespace adgan
