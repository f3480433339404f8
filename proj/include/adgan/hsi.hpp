#pragma once

// Hyperspectral cube ingestion and preparation: the HSC on-disk container,
// PCA band reduction, range normalization, patch extraction, stratified
// splitting, and a synthetic dataset generator for desk-scale experiments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "adgan/rng.hpp"
#include "adgan/tensor.hpp"

namespace adgan {

namespace fs = std::filesystem;

struct HsiCube {
    int width = 0, height = 0, bands = 0;
    // band-sequential, row-major within band
    std::vector<float> data;

    float at(int x, int y, int b) const {
        return data[(static_cast<std::size_t>(b) * height + y) * width + x];
    }
    float& at(int x, int y, int b) {
        return data[(static_cast<std::size_t>(b) * height + y) * width + x];
    }
    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
};

struct LabelRaster {
    int width = 0, height = 0;
    std::vector<std::uint16_t> labels;  // 0 = unlabeled, 1..K

    std::uint16_t at(int x, int y) const {
        return labels[static_cast<std::size_t>(y) * width + x];
    }
    int max_class() const {
        std::uint16_t m = 0;
        for (auto l : labels) m = std::max(m, l);
        return m;
    }
};

struct PatchSet {
    int patch_size = 0;
    int channels = 0;
    std::vector<float> data;  // N x C x S x S
    std::vector<int> labels;  // 1..K
    std::vector<std::pair<int, int>> centers;  // (x, y)

    std::int64_t count() const { return static_cast<std::int64_t>(labels.size()); }
    std::size_t patch_stride() const {
        return static_cast<std::size_t>(channels) * patch_size * patch_size;
    }
    const float* patch(std::int64_t i) const { return data.data() + i * patch_stride(); }
};

struct SplitSpec {
    int total = 0;                      // used when per_class is empty
    std::map<int, int> per_class;       // explicit per-class train counts
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// HSC container: meta.json + cube.bin (f32 LE) + labels.bin (u16 LE)

namespace detail {
inline void write_file(const fs::path& p, const void* data, std::size_t bytes) {
    std::ofstream f(p, std::ios::binary);
    check(f.good(), "cannot open " + p.string() + " for writing");
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    check(f.good(), "write failed for " + p.string());
}

inline std::vector<char> read_file(const fs::path& p, std::size_t expected_bytes) {
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    check(f.good(), "cannot open " + p.string());
    auto size = static_cast<std::size_t>(f.tellg());
    check(size == expected_bytes, p.string() + ": expected " + std::to_string(expected_bytes) +
                                      " bytes, found " + std::to_string(size));
    std::vector<char> buf(size);
    f.seekg(0);
    f.read(buf.data(), static_cast<std::streamsize>(size));
    check(f.good(), "read failed for " + p.string());
    return buf;
}
}  // namespace detail

inline void save_hsc(const fs::path& dir, const HsiCube& cube, const LabelRaster& labels,
                     const std::vector<std::string>& class_names = {}) {
    check(cube.width == labels.width && cube.height == labels.height,
          "save_hsc: cube and label raster dimensions differ");
    fs::create_directories(dir);
    nlohmann::json meta{{"width", cube.width},
                        {"height", cube.height},
                        {"bands", cube.bands},
                        {"dtype", "f32"},
                        {"version", 1}};
    if (!class_names.empty()) meta["class_names"] = class_names;
    std::ofstream mf(dir / "meta.json");
    mf << meta.dump(2) << "\n";
    detail::write_file(dir / "cube.bin", cube.data.data(), cube.data.size() * sizeof(float));
    detail::write_file(dir / "labels.bin", labels.labels.data(),
                       labels.labels.size() * sizeof(std::uint16_t));
}

inline std::pair<HsiCube, LabelRaster> load_hsc(const fs::path& dir) {
    std::ifstream mf(dir / "meta.json");
    check(mf.good(), "cannot open " + (dir / "meta.json").string());
    nlohmann::json meta = nlohmann::json::parse(mf);
    check(meta.value("version", 0) == 1,
          "unknown HSC version " + std::to_string(meta.value("version", 0)));
    check(meta.value("dtype", "") == "f32", "unsupported dtype '" + meta.value("dtype", std::string()) + "'");
    HsiCube cube;
    cube.width = meta.at("width").get<int>();
    cube.height = meta.at("height").get<int>();
    cube.bands = meta.at("bands").get<int>();
    check(cube.width > 0 && cube.height > 0 && cube.bands > 0, "HSC meta: non-positive dimensions");
    std::size_t n = static_cast<std::size_t>(cube.width) * cube.height;
    auto cbuf = detail::read_file(dir / "cube.bin", n * cube.bands * sizeof(float));
    cube.data.resize(n * cube.bands);
    std::memcpy(cube.data.data(), cbuf.data(), cbuf.size());
    for (float v : cube.data) check(std::isfinite(v), "HSC cube contains non-finite values");
    LabelRaster labels;
    labels.width = cube.width;
    labels.height = cube.height;
    auto lbuf = detail::read_file(dir / "labels.bin", n * sizeof(std::uint16_t));
    labels.labels.resize(n);
    std::memcpy(labels.labels.data(), lbuf.data(), lbuf.size());
    return {std::move(cube), std::move(labels)};
}

// ---------------------------------------------------------------------------
// PCA band reduction

namespace detail {
// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Returns eigenvalues (descending) and the matching eigenvectors as rows.
inline void jacobi_eigh(std::vector<double> a, int n, std::vector<double>& eigvals,
                        std::vector<double>& eigvecs_rows) {
    std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[static_cast<std::size_t>(p) * n + q] *
                                                    a[static_cast<std::size_t>(p) * n + q];
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = a[static_cast<std::size_t>(p) * n + q];
                if (std::abs(apq) < 1e-300) continue;
                double app = a[static_cast<std::size_t>(p) * n + p];
                double aqq = a[static_cast<std::size_t>(q) * n + q];
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = a[static_cast<std::size_t>(i) * n + p];
                    double aiq = a[static_cast<std::size_t>(i) * n + q];
                    a[static_cast<std::size_t>(i) * n + p] = c * aip - s * aiq;
                    a[static_cast<std::size_t>(i) * n + q] = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = a[static_cast<std::size_t>(p) * n + i];
                    double aqi = a[static_cast<std::size_t>(q) * n + i];
                    a[static_cast<std::size_t>(p) * n + i] = c * api - s * aqi;
                    a[static_cast<std::size_t>(q) * n + i] = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = v[static_cast<std::size_t>(i) * n + p];
                    double viq = v[static_cast<std::size_t>(i) * n + q];
                    v[static_cast<std::size_t>(i) * n + p] = c * vip - s * viq;
                    v[static_cast<std::size_t>(i) * n + q] = s * vip + c * viq;
                }
            }
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        return a[static_cast<std::size_t>(x) * n + x] > a[static_cast<std::size_t>(y) * n + y];
    });
    eigvals.resize(static_cast<std::size_t>(n));
    eigvecs_rows.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int r = 0; r < n; ++r) {
        int col = order[static_cast<std::size_t>(r)];
        eigvals[static_cast<std::size_t>(r)] = a[static_cast<std::size_t>(col) * n + col];
        for (int i = 0; i < n; ++i)
            eigvecs_rows[static_cast<std::size_t>(r) * n + i] =
                v[static_cast<std::size_t>(i) * n + col];
    }
}
}  // namespace detail

// Mean-centered projection onto the leading eigenvectors of the band
// covariance. Sign convention: the largest-magnitude loading of each
// component is positive.
inline HsiCube pca_reduce(const HsiCube& cube, int components = 3) {
    check(components > 0 && components <= cube.bands,
          "pca_reduce: components " + std::to_string(components) + " exceeds bands " +
              std::to_string(cube.bands));
    std::size_t n = cube.plane_size();
    check(n >= 2, "pca_reduce: need at least 2 pixels");
    int B = cube.bands;
    std::vector<double> mean(static_cast<std::size_t>(B), 0.0);
    for (int b = 0; b < B; ++b) {
        double m = 0.0;
        const float* plane = cube.data.data() + static_cast<std::size_t>(b) * n;
        for (std::size_t i = 0; i < n; ++i) m += plane[i];
        mean[static_cast<std::size_t>(b)] = m / static_cast<double>(n);
    }
    std::vector<double> cov(static_cast<std::size_t>(B) * B, 0.0);
    for (int b1 = 0; b1 < B; ++b1) {
        const float* p1 = cube.data.data() + static_cast<std::size_t>(b1) * n;
        for (int b2 = b1; b2 < B; ++b2) {
            const float* p2 = cube.data.data() + static_cast<std::size_t>(b2) * n;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                acc += (p1[i] - mean[static_cast<std::size_t>(b1)]) *
                       (p2[i] - mean[static_cast<std::size_t>(b2)]);
            acc /= static_cast<double>(n - 1);
            cov[static_cast<std::size_t>(b1) * B + b2] = acc;
            cov[static_cast<std::size_t>(b2) * B + b1] = acc;
        }
    }
    std::vector<double> eigvals, eigvecs;
    detail::jacobi_eigh(cov, B, eigvals, eigvecs);
    HsiCube out;
    out.width = cube.width;
    out.height = cube.height;
    out.bands = components;
    out.data.resize(n * static_cast<std::size_t>(components));
    for (int c = 0; c < components; ++c) {
        double* row = eigvecs.data() + static_cast<std::size_t>(c) * B;
        int arg = 0;
        for (int b = 1; b < B; ++b)
            if (std::abs(row[b]) > std::abs(row[arg])) arg = b;
        double sign = row[arg] >= 0 ? 1.0 : -1.0;
        float* oplane = out.data.data() + static_cast<std::size_t>(c) * n;
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int b = 0; b < B; ++b)
                acc += sign * row[b] *
                       (cube.data[static_cast<std::size_t>(b) * n + i] -
                        mean[static_cast<std::size_t>(b)]);
            oplane[i] = static_cast<float>(acc);
        }
    }
    return out;
}

// Per-band affine map min -> -0.5, max -> 0.5; constant bands map to 0.
inline HsiCube normalize_range(const HsiCube& cube) {
    HsiCube out = cube;
    std::size_t n = cube.plane_size();
    for (int b = 0; b < cube.bands; ++b) {
        float* plane = out.data.data() + static_cast<std::size_t>(b) * n;
        float lo = plane[0], hi = plane[0];
        for (std::size_t i = 0; i < n; ++i) {
            lo = std::min(lo, plane[i]);
            hi = std::max(hi, plane[i]);
        }
        if (hi == lo) {
            std::fill(plane, plane + n, 0.0f);
        } else {
            float inv = 1.0f / (hi - lo);
            for (std::size_t i = 0; i < n; ++i) plane[i] = (plane[i] - lo) * inv - 0.5f;
        }
    }
    return out;
}

namespace detail {
// Symmetric (edge-including) reflection of an out-of-range coordinate.
inline int mirror_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}
}  // namespace detail

// One S x S x bands patch per labeled pixel, mirror-padded at the borders.
// Patches are ordered by row-major center index. Odd S centers the labeled
// pixel exactly; even S places it at offset S/2 (window [-S/2, S/2 - 1]).
inline PatchSet extract_patches(const HsiCube& cube, const LabelRaster& labels, int S) {
    check(S > 0, "extract_patches: S must be positive, got " + std::to_string(S));
    check(S <= 2 * std::min(cube.width, cube.height),
          "extract_patches: S " + std::to_string(S) + " too large for " +
              std::to_string(cube.width) + "x" + std::to_string(cube.height));
    check(cube.width == labels.width && cube.height == labels.height,
          "extract_patches: cube/labels dimension mismatch");
    PatchSet ps;
    ps.patch_size = S;
    ps.channels = cube.bands;
    int lo = -S / 2, hi = (S - 1) / 2;
    for (int y = 0; y < cube.height; ++y)
        for (int x = 0; x < cube.width; ++x) {
            int lab = labels.at(x, y);
            if (lab == 0) continue;
            ps.labels.push_back(lab);
            ps.centers.emplace_back(x, y);
            for (int b = 0; b < cube.bands; ++b)
                for (int dy = lo; dy <= hi; ++dy) {
                    int sy = detail::mirror_index(y + dy, cube.height);
                    for (int dx = lo; dx <= hi; ++dx) {
                        int sx = detail::mirror_index(x + dx, cube.width);
                        ps.data.push_back(cube.at(sx, sy, b));
                    }
                }
        }
    return ps;
}

// Train counts per class: explicit per-class map, or a total allocated
// proportionally to class frequency with a minimum of 1 per class.
inline std::map<int, int> allocate_train_counts(const std::map<int, int>& available,
                                                const SplitSpec& spec) {
    if (!spec.per_class.empty()) {
        for (auto [cls, cnt] : spec.per_class) {
            auto it = available.find(cls);
            check(it != available.end() && it->second >= cnt,
                  "split: class " + std::to_string(cls) + " has fewer than " +
                      std::to_string(cnt) + " samples");
        }
        return spec.per_class;
    }
    std::int64_t n_total = 0;
    for (auto [cls, cnt] : available) n_total += cnt;
    check(spec.total >= static_cast<int>(available.size()),
          "split: total " + std::to_string(spec.total) + " below one per class");
    check(spec.total <= n_total, "split: total exceeds labeled sample count");
    std::map<int, int> out;
    std::vector<std::pair<double, int>> frac;  // (fractional part, class)
    int assigned = 0;
    for (auto [cls, cnt] : available) {
        double exact = static_cast<double>(spec.total) * cnt / static_cast<double>(n_total);
        int base = std::max(1, static_cast<int>(std::floor(exact)));
        base = std::min(base, cnt);
        out[cls] = base;
        assigned += base;
        frac.emplace_back(exact - std::floor(exact), cls);
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    // distribute the remainder (or trim) deterministically
    int guard = 0;
    while (assigned != spec.total && guard++ < 100000) {
        for (auto& [f, cls] : frac) {
            if (assigned < spec.total && out[cls] < available.at(cls)) {
                ++out[cls];
                ++assigned;
            } else if (assigned > spec.total && out[cls] > 1) {
                --out[cls];
                --assigned;
            }
            if (assigned == spec.total) break;
        }
    }
    check(assigned == spec.total, "split: could not satisfy total " + std::to_string(spec.total));
    return out;
}

// Disjoint train/test split; train counts match the requested counts exactly and all
// remaining labeled samples go to the test set.
inline std::pair<PatchSet, PatchSet> stratified_split(const PatchSet& ps, const SplitSpec& spec) {
    std::map<int, std::vector<std::int64_t>> by_class;
    for (std::int64_t i = 0; i < ps.count(); ++i) by_class[ps.labels[static_cast<std::size_t>(i)]].push_back(i);
    std::map<int, int> available;
    for (auto& [cls, idx] : by_class) available[cls] = static_cast<int>(idx.size());
    auto counts = allocate_train_counts(available, spec);
    std::vector<bool> in_train(static_cast<std::size_t>(ps.count()), false);
    for (auto& [cls, idx] : by_class) {
        auto it = counts.find(cls);
        int want = it == counts.end() ? 0 : it->second;
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(cls)));
        auto shuffled = idx;
        rng.shuffle(shuffled);
        for (int i = 0; i < want; ++i) in_train[static_cast<std::size_t>(shuffled[static_cast<std::size_t>(i)])] = true;
    }
    PatchSet train, test;
    for (auto* p : {&train, &test}) {
        p->patch_size = ps.patch_size;
        p->channels = ps.channels;
    }
    for (std::int64_t i = 0; i < ps.count(); ++i) {
        PatchSet& dst = in_train[static_cast<std::size_t>(i)] ? train : test;
        dst.labels.push_back(ps.labels[static_cast<std::size_t>(i)]);
        dst.centers.push_back(ps.centers[static_cast<std::size_t>(i)]);
        const float* src = ps.patch(i);
        dst.data.insert(dst.data.end(), src, src + ps.patch_stride());
    }
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// synthetic dataset

struct SynthSpec {
    int width = 64, height = 64;
    int bands = 16;
    std::vector<int> class_pixel_counts{500, 500, 25};
    double noise = 0.05;
    std::uint64_t seed = 1;
};

// K spatially contiguous textured blobs with class-specific spectral
// signatures. Zero noise yields identical spectra within a class.
inline std::pair<HsiCube, LabelRaster> synth_dataset(const SynthSpec& spec) {
    int K = static_cast<int>(spec.class_pixel_counts.size());
    std::int64_t total = 0;
    for (int c : spec.class_pixel_counts) total += c;
    check(total <= static_cast<std::int64_t>(spec.width) * spec.height,
          "synth_dataset: class counts exceed raster size");
    Rng rng(spec.seed);
    // smooth per-class spectral signatures, well separated
    std::vector<std::vector<float>> sig(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c) {
        auto& s = sig[static_cast<std::size_t>(c)];
        s.resize(static_cast<std::size_t>(spec.bands));
        double phase = rng.uniform(0.0, 6.28);
        double amp = 0.6 + 0.4 * rng.uniform();
        double slope = rng.uniform(-0.5, 0.5);
        for (int b = 0; b < spec.bands; ++b) {
            double t = static_cast<double>(b) / spec.bands;
            s[static_cast<std::size_t>(b)] = static_cast<float>(
                amp * std::sin(2.0 * (c + 1) * t + phase) + slope * t + 2.0 * c);
        }
    }
    LabelRaster labels;
    labels.width = spec.width;
    labels.height = spec.height;
    labels.labels.assign(static_cast<std::size_t>(spec.width) * spec.height, 0);
    // grow each class region from a random free seed pixel
    auto idx = [&](int x, int y) { return static_cast<std::size_t>(y) * spec.width + x; };
    for (int c = 0; c < K; ++c) {
        int want = spec.class_pixel_counts[static_cast<std::size_t>(c)];
        if (want == 0) continue;
        int sx, sy;
        do {
            sx = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.width)));
            sy = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.height)));
        } while (labels.labels[idx(sx, sy)] != 0);
        std::vector<std::pair<int, int>> frontier{{sx, sy}};
        labels.labels[idx(sx, sy)] = static_cast<std::uint16_t>(c + 1);
        int placed = 1;
        while (placed < want) {
            check(!frontier.empty(), "synth_dataset: region growth stuck; raster too full");
            std::size_t pick = static_cast<std::size_t>(rng.below(frontier.size()));
            auto [x, y] = frontier[pick];
            static const int dx[4] = {1, -1, 0, 0};
            static const int dy[4] = {0, 0, 1, -1};
            bool grew = false;
            for (int d = 0; d < 4 && placed < want; ++d) {
                int nx = x + dx[d], ny = y + dy[d];
                if (nx < 0 || nx >= spec.width || ny < 0 || ny >= spec.height) continue;
                if (labels.labels[idx(nx, ny)] != 0) continue;
                labels.labels[idx(nx, ny)] = static_cast<std::uint16_t>(c + 1);
                frontier.emplace_back(nx, ny);
                ++placed;
                grew = true;
            }
            if (!grew) frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
        }
    }
    HsiCube cube;
    cube.width = spec.width;
    cube.height = spec.height;
    cube.bands = spec.bands;
    cube.data.resize(static_cast<std::size_t>(spec.width) * spec.height * spec.bands);
    Rng noise_rng(derive_seed(spec.seed, 0xb0b));
    std::size_t n = cube.plane_size();
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            int lab = labels.at(x, y);
            double tex = spec.noise * noise_rng.gaussian();
            for (int b = 0; b < spec.bands; ++b) {
                double base = lab == 0
                                  ? -1.0
                                  : sig[static_cast<std::size_t>(lab - 1)][static_cast<std::size_t>(b)];
                double v = base * (1.0 + tex) + spec.noise * noise_rng.gaussian();
                cube.data[static_cast<std::size_t>(b) * n + idx(x, y)] = static_cast<float>(v);
            }
        }
    return {std::move(cube), std::move(labels)};
}

}  // namespace adgan
