// adgan: hyperspectral GAN-classifier experiment driver.
//
// Subcommands: synth | prepare | train | eval | generate | demo-drop | sweep.
// Every run writes a manifest.json with the fully resolved configuration so
// a run can be reproduced bit-for-bit by pointing --config at the manifest.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adgan/eval.hpp"
#include "adgan/hsi.hpp"
#include "adgan/image_io.hpp"
#include "adgan/model.hpp"
#include "adgan/threads.hpp"
#include "adgan/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace adgan;

namespace {

constexpr const char* kVersion = "1.0.0";

struct ExperimentConfig {
    std::uint64_t seed = 1;
    fs::path out = "out";
    fs::path dataset;     // HSC directory (input)
    fs::path checkpoint;  // model file for eval/generate
    SynthSpec synth;
    std::optional<std::uint64_t> synth_seed;  // defaults to the master seed
    int split_total = 300;
    std::map<int, int> split_per_class;
    std::optional<std::uint64_t> split_seed;
    ModelSpec model;
    TrainConfig train;
    std::string grid = "b_size";  // sweep axis
    int samples_per_class = 8;    // generate: grid columns
};

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto& [key, _] : j.items())
        check(allowed.count(key) == 1, "unknown config key '" + key + "' in " + where);
}

void apply_config_json(ExperimentConfig& c, const json& j) {
    reject_unknown(j, {"seed", "out", "dataset", "checkpoint", "synth", "split", "model", "reg",
                       "train", "grid", "samples_per_class"},
                   "config");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("checkpoint")) c.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("grid")) c.grid = j.at("grid").get<std::string>();
    if (j.contains("samples_per_class")) c.samples_per_class = j.at("samples_per_class").get<int>();
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        reject_unknown(s, {"width", "height", "bands", "class_pixel_counts", "noise", "seed"},
                       "synth");
        if (s.contains("width")) c.synth.width = s.at("width").get<int>();
        if (s.contains("height")) c.synth.height = s.at("height").get<int>();
        if (s.contains("bands")) c.synth.bands = s.at("bands").get<int>();
        if (s.contains("class_pixel_counts"))
            c.synth.class_pixel_counts = s.at("class_pixel_counts").get<std::vector<int>>();
        if (s.contains("noise")) c.synth.noise = s.at("noise").get<double>();
        if (s.contains("seed")) c.synth_seed = s.at("seed").get<std::uint64_t>();
    }
    if (j.contains("split")) {
        const json& s = j.at("split");
        reject_unknown(s, {"total", "per_class", "seed"}, "split");
        if (s.contains("total")) c.split_total = s.at("total").get<int>();
        if (s.contains("per_class"))
            for (auto& [cls, n] : s.at("per_class").items())
                c.split_per_class[std::stoi(cls)] = n.get<int>();
        if (s.contains("seed")) c.split_seed = s.at("seed").get<std::uint64_t>();
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(m, {"patch_size", "depth", "noise_dim", "g_top", "d_base", "loss_mode",
                           "g_reg_layer", "d_reg_layer", "reg_enabled"},
                       "model");
        if (m.contains("patch_size")) c.model.S = m.at("patch_size").get<int>();
        if (m.contains("depth")) c.model.depth = m.at("depth").get<int>();
        if (m.contains("noise_dim")) c.model.noise_dim = m.at("noise_dim").get<int>();
        if (m.contains("g_top")) c.model.g_top = m.at("g_top").get<int>();
        if (m.contains("d_base")) c.model.d_base = m.at("d_base").get<int>();
        if (m.contains("loss_mode"))
            c.model.loss_mode = loss_mode_from_name(m.at("loss_mode").get<std::string>());
        if (m.contains("g_reg_layer")) c.model.g_reg_layer = m.at("g_reg_layer").get<int>();
        if (m.contains("d_reg_layer")) c.model.d_reg_layer = m.at("d_reg_layer").get<int>();
        if (m.contains("reg_enabled")) c.model.reg_enabled = m.at("reg_enabled").get<bool>();
    }
    if (j.contains("reg")) {
        const json& r = j.at("reg");
        reject_unknown(r, {"kind", "b_size", "k", "keep_prob", "dropout_p",
                           "denormalize_after_drop"},
                       "reg");
        RegularizerConfig& rc = c.model.reg;
        if (r.contains("kind")) rc.kind = reg_kind_from_name(r.at("kind").get<std::string>());
        if (r.contains("b_size")) rc.b_size = r.at("b_size").get<int>();
        if (r.contains("k")) rc.k = r.at("k").get<double>();
        if (r.contains("keep_prob")) rc.keep_prob = r.at("keep_prob").get<double>();
        if (r.contains("dropout_p")) rc.dropout_p = r.at("dropout_p").get<double>();
        if (r.contains("denormalize_after_drop"))
            rc.denormalize_after_drop = r.at("denormalize_after_drop").get<bool>();
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t, {"epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps",
                           "checkpoint_every", "match_empirical"},
                       "train");
        if (t.contains("epochs")) c.train.epochs = t.at("epochs").get<int>();
        if (t.contains("batch_size")) c.train.batch_size = t.at("batch_size").get<int>();
        if (t.contains("lr")) c.train.lr = t.at("lr").get<double>();
        if (t.contains("beta1")) c.train.beta1 = t.at("beta1").get<double>();
        if (t.contains("beta2")) c.train.beta2 = t.at("beta2").get<double>();
        if (t.contains("adam_eps")) c.train.adam_eps = t.at("adam_eps").get<double>();
        if (t.contains("checkpoint_every")) c.train.checkpoint_every = t.at("checkpoint_every").get<int>();
        if (t.contains("match_empirical")) c.train.match_empirical = t.at("match_empirical").get<bool>();
    }
}

// derived sub-seeds unless the config pins them explicitly
std::uint64_t synth_seed(const ExperimentConfig& c) {
    return c.synth_seed ? *c.synth_seed : c.seed;
}
std::uint64_t split_seed(const ExperimentConfig& c) {
    return c.split_seed ? *c.split_seed : derive_seed(c.seed, 0x5b11);
}

json resolved_config(const ExperimentConfig& c) {
    json per_class = json::object();
    for (auto& [cls, n] : c.split_per_class) per_class[std::to_string(cls)] = n;
    return {
        {"seed", c.seed},
        {"out", c.out.string()},
        {"dataset", c.dataset.string()},
        {"checkpoint", c.checkpoint.string()},
        {"grid", c.grid},
        {"samples_per_class", c.samples_per_class},
        {"synth",
         {{"width", c.synth.width},
          {"height", c.synth.height},
          {"bands", c.synth.bands},
          {"class_pixel_counts", c.synth.class_pixel_counts},
          {"noise", c.synth.noise},
          {"seed", synth_seed(c)}}},
        {"split", {{"total", c.split_total}, {"per_class", per_class}, {"seed", split_seed(c)}}},
        {"model",
         {{"patch_size", c.model.S},
          {"depth", c.model.depth},
          {"noise_dim", c.model.noise_dim},
          {"g_top", c.model.g_top},
          {"d_base", c.model.d_base},
          {"loss_mode", loss_mode_name(c.model.loss_mode)},
          {"g_reg_layer", c.model.g_reg_layer},
          {"d_reg_layer", c.model.d_reg_layer},
          {"reg_enabled", c.model.reg_enabled}}},
        {"reg",
         {{"kind", reg_kind_name(c.model.reg.kind)},
          {"b_size", c.model.reg.b_size},
          {"k", c.model.reg.k},
          {"keep_prob", c.model.reg.keep_prob},
          {"dropout_p", c.model.reg.dropout_p},
          {"denormalize_after_drop", c.model.reg.denormalize_after_drop}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"lr", c.train.lr},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"adam_eps", c.train.adam_eps},
          {"checkpoint_every", c.train.checkpoint_every},
          {"match_empirical", c.train.match_empirical}}}};
}

void write_manifest(const ExperimentConfig& c, const std::string& command) {
    fs::create_directories(c.out);
    json m{{"version", kVersion},
           {"command", command},
           {"threads", thread_cap()},
           {"config", resolved_config(c)}};
    std::ofstream f(c.out / "manifest.json");
    f << m.dump(2) << "\n";
    check(f.good(), "cannot write manifest to " + (c.out / "manifest.json").string());
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream f(p);
    f << j.dump(2) << "\n";
    check(f.good(), "cannot write " + p.string());
}

// ---------------------------------------------------------------------------
// pipeline pieces shared by several subcommands

std::pair<HsiCube, LabelRaster> load_dataset(const ExperimentConfig& c) {
    check(!c.dataset.empty(), "no dataset directory given (--config dataset or run `synth`)");
    return load_hsc(c.dataset);
}

HsiCube prepare_cube(const HsiCube& cube) {
    return normalize_range(cube.bands == 3 ? cube : pca_reduce(cube, 3));
}

struct SplitOut {
    PatchSet train, test;
};

SplitOut make_split(const ExperimentConfig& c, const HsiCube& cube3, const LabelRaster& labels) {
    PatchSet all = extract_patches(cube3, labels, c.model.S);
    SplitSpec spec;
    spec.total = c.split_total;
    spec.per_class = c.split_per_class;
    spec.seed = split_seed(c);
    auto [tr, te] = stratified_split(all, spec);
    return {std::move(tr), std::move(te)};
}

json pixel_list(const PatchSet& ps) {
    json out = json::array();
    for (auto& [x, y] : ps.centers) out.push_back({x, y});
    return out;
}

std::vector<std::pair<int, int>> read_pixel_list(const json& j) {
    std::vector<std::pair<int, int>> out;
    for (auto& p : j) out.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    return out;
}

json metrics_json(const MetricsReport& r) { return r.to_json(); }

// ---------------------------------------------------------------------------
// subcommands

int cmd_synth(const ExperimentConfig& c) {
    SynthSpec s = c.synth;
    s.seed = synth_seed(c);
    auto [cube, labels] = synth_dataset(s);
    save_hsc(c.out / "dataset", cube, labels);
    write_manifest(c, "synth");
    std::cout << "wrote " << (c.out / "dataset").string() << " (" << cube.width << "x"
              << cube.height << "x" << cube.bands << ", " << labels.max_class() << " classes)\n";
    return 0;
}

int cmd_prepare(const ExperimentConfig& c) {
    auto [cube, labels] = load_dataset(c);
    HsiCube cube3 = prepare_cube(cube);
    save_hsc(c.out / "prepared", cube3, labels);
    // cache the labeled patches alongside, as a sanity summary
    PatchSet all = extract_patches(cube3, labels, c.model.S);
    std::map<int, int> counts;
    for (int l : all.labels) ++counts[l];
    json summary{{"patches", all.count()}, {"patch_size", c.model.S}};
    for (auto& [cls, n] : counts) summary["per_class"][std::to_string(cls)] = n;
    write_json(c.out / "patches.json", summary);
    write_manifest(c, "prepare");
    std::cout << "prepared " << all.count() << " labeled patches\n";
    return 0;
}

int cmd_train(const ExperimentConfig& c) {
    auto [cube, labels] = load_dataset(c);
    HsiCube cube3 = prepare_cube(cube);
    auto split = make_split(c, cube3, labels);
    ModelSpec spec = c.model;
    spec.K = labels.max_class();
    spec.channels = 3;
    Model<float> model(spec, c.seed);
    TrainConfig tcfg = c.train;
    tcfg.seed = derive_seed(c.seed, 0x7a41);
    fs::create_directories(c.out / "checkpoints");
    tcfg.checkpoint_dir = c.out / "checkpoints";
    auto res = train(model, split.train, tcfg);
    save_checkpoint(c.out / "best.ckpt", res.best_model, 0, 0.0, 0.0);
    res.log.write_csv(c.out / "train_log.csv");
    write_json(c.out / "train_summary.json", res.log.summary());
    write_json(c.out / "split.json",
               {{"train", pixel_list(split.train)}, {"test", pixel_list(split.test)}});
    write_manifest(c, "train");
    std::cout << "trained " << res.log.steps.size() << " steps, best epoch "
              << res.log.best_epoch << ", model at " << (c.out / "best.ckpt").string() << "\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& c) {
    auto [cube, labels] = load_dataset(c);
    HsiCube cube3 = prepare_cube(cube);
    fs::path ckpt = c.checkpoint.empty() ? c.out / "best.ckpt" : c.checkpoint;
    Model<float> model = load_checkpoint<float>(ckpt);
    model.set_training(false);
    check(model.spec().loss_mode != LossMode::kVanilla,
          "eval: a vanilla-mode model has no class head to evaluate");
    json out;
    // full-scene pass over every labeled pixel
    auto scene = classify_scene(model, cube3, labels);
    out["all_labeled"] = metrics_json(metrics(scene.cm));
    // held-out pass when a split file is available next to the checkpoint
    fs::path split_file = ckpt.parent_path() / "split.json";
    if (fs::exists(split_file)) {
        std::ifstream f(split_file);
        json sj = json::parse(f);
        auto test_pixels = read_pixel_list(sj.at("test"));
        auto held = classify_scene(model, cube3, labels, &test_pixels);
        out["test"] = metrics_json(metrics(held.cm));
    }
    write_json(c.out / "metrics.json", out);
    Palette pal = default_palette(model.spec().K);
    save_palette(c.out / "palette.txt", pal);
    write_ppm(c.out / "map.ppm", render_map(scene.prediction, pal));
    write_ppm(c.out / "reference.ppm", render_map(labels, pal));
    write_manifest(c, "eval");
    std::cout << "metrics at " << (c.out / "metrics.json").string() << "\n";
    return 0;
}

int cmd_generate(const ExperimentConfig& c) {
    fs::path ckpt = c.checkpoint.empty() ? c.out / "best.ckpt" : c.checkpoint;
    Model<float> model = load_checkpoint<float>(ckpt);
    model.set_training(false);
    int K = model.spec().K;
    std::vector<int> classes;
    for (int k = 1; k <= K; ++k) classes.push_back(k);
    write_ppm(c.out / "samples.ppm",
              sample_grid(model, classes, c.samples_per_class, derive_seed(c.seed, 0x9e4)));
    // diversity per class, against real patches when a dataset is available
    PatchSet real;
    bool have_real = !c.dataset.empty();
    HsiCube cube3;
    LabelRaster labels;
    if (have_real) {
        auto [cube, lab] = load_dataset(c);
        cube3 = prepare_cube(cube);
        labels = lab;
        real = extract_patches(cube3, labels, model.spec().S);
    }
    json div = json::array();
    for (int k = 1; k <= K; ++k) {
        auto rep = diversity_report(model, k, 32, derive_seed(c.seed, 0xd1, static_cast<std::uint64_t>(k)),
                                    have_real ? &real : nullptr);
        json entry = rep.to_json();
        entry["class"] = k;
        if (have_real) entry["real_within_class_distance"] = real_within_class_distance(real, k);
        div.push_back(entry);
    }
    write_json(c.out / "diversity.json", div);
    write_manifest(c, "generate");
    std::cout << "samples at " << (c.out / "samples.ppm").string() << "\n";
    return 0;
}

int cmd_demo_drop(const ExperimentConfig& c, const fs::path& map_file) {
    // feature plane: a supplied PGM, or a seeded smooth synthetic surface
    int side = std::max(c.model.S, 3);
    std::vector<double> plane;
    int w = side, h = side;
    if (!map_file.empty()) {
        GrayImage img = read_pgm(map_file);
        w = img.width;
        h = img.height;
        for (auto p : img.pixels) plane.push_back(p / 255.0);
    } else {
        Rng rng(c.seed);
        double fx = 2.0 + rng.uniform(), fy = 1.0 + rng.uniform();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                plane.push_back(std::sin(fx * x / w * 6.283) * std::cos(fy * y / h * 6.283) +
                                0.1 * rng.gaussian());
    }
    fs::create_directories(c.out);
    auto to_pgm = [&](const std::vector<double>& v, double lo, double hi) {
        GrayImage img;
        img.width = w;
        img.height = h;
        for (double x : v)
            img.pixels.push_back(static_cast<std::uint8_t>(
                std::lround(std::clamp((x - lo) / (hi - lo), 0.0, 1.0) * 255.0)));
        return img;
    };
    std::vector<double> norm;
    normalize_plane(plane, norm);
    write_pgm(c.out / "input.pgm", to_pgm(norm, 0.0, 1.0));
    for (auto kind : {RegKind::kDropout, RegKind::kDropBlock, RegKind::kAdapDrop}) {
        RegularizerConfig cfg = c.model.reg;
        cfg.kind = kind;
        DropMask mask;
        std::vector<double> out;
        switch (kind) {
            case RegKind::kDropout: out = dropout_plane(plane, cfg.dropout_p, c.seed, &mask); break;
            case RegKind::kDropBlock: out = dropblock_plane(plane, w, h, cfg, c.seed, &mask); break;
            default: out = adapdrop_plane(plane, w, h, cfg, c.seed, &mask); break;
        }
        std::string name = reg_kind_name(kind);
        GrayImage mimg;
        mimg.width = w;
        mimg.height = h;
        for (auto on : mask.on) mimg.pixels.push_back(on ? 255 : 0);
        write_pgm(c.out / (name + "_mask.pgm"), mimg);
        double hi = *std::max_element(out.begin(), out.end());
        double lo = *std::min_element(out.begin(), out.end());
        if (hi == lo) hi = lo + 1.0;
        write_pgm(c.out / (name + "_output.pgm"), to_pgm(out, lo, hi));
    }
    write_manifest(c, "demo-drop");
    std::cout << "masks at " << c.out.string() << "\n";
    return 0;
}

int cmd_sweep(const ExperimentConfig& c) {
    static const std::map<std::string, std::vector<int>> grids{
        {"b_size", {3, 5, 7, 9, 11}},
        {"k", {30, 35, 40, 45}},
        {"patch_size", {11, 15, 19, 23, 27, 31}},
        {"depth", {3, 4, 5, 6, 7}}};
    auto it = grids.find(c.grid);
    check(it != grids.end(), "sweep: unknown grid '" + c.grid +
                                 "' (expected b_size, k, patch_size, or depth)");
    auto [cube, labels] = load_dataset(c);
    HsiCube cube3 = prepare_cube(cube);
    fs::create_directories(c.out);
    std::ofstream csv(c.out / "sweep.csv");
    csv << "parameter,value,oa,aa,kappa,train_seconds\n";
    for (int value : it->second) {
        ExperimentConfig run = c;
        if (c.grid == "b_size")
            run.model.reg.b_size = value;
        else if (c.grid == "k")
            run.model.reg.k = value;
        else if (c.grid == "patch_size")
            run.model.S = value;
        else
            run.model.depth = value;
        check(run.model.S <= 2 * std::min(cube3.width, cube3.height),
              "sweep: patch size exceeds scene dimensions");
        auto split = make_split(run, cube3, labels);
        ModelSpec spec = run.model;
        spec.K = labels.max_class();
        spec.channels = 3;
        Model<float> model(spec, run.seed);
        TrainConfig tcfg = run.train;
        tcfg.seed = derive_seed(run.seed, 0x7a41);
        auto res = train(model, split.train, tcfg);
        res.best_model.set_training(false);
        std::vector<std::pair<int, int>> test_pixels = split.test.centers;
        auto held = classify_scene(res.best_model, cube3, labels, &test_pixels);
        auto rep = metrics(held.cm);
        csv << c.grid << "," << value << "," << rep.oa << "," << rep.aa << "," << rep.kappa
            << "," << res.log.wall_seconds << "\n";
        csv.flush();
        std::cout << c.grid << "=" << value << " oa=" << rep.oa << " kappa=" << rep.kappa << "\n";
    }
    check(csv.good(), "sweep: CSV write failed");
    write_manifest(c, "sweep");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hyperspectral adversarial classifier pipeline"};
    app.require_subcommand(1);

    std::string config_file, loss_mode, reg_kind, out_dir, dataset_dir, checkpoint_file, grid;
    std::int64_t seed = -1;
    int b_size = -1, patch_size = -1, epochs = -1, batch_size = -1;
    double k = -1.0;
    fs::path demo_map;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "JSON config file (or a prior manifest.json)");
        sub->add_option("--seed", seed, "master random seed");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--dataset", dataset_dir, "input HSC dataset directory");
        sub->add_option("--checkpoint", checkpoint_file, "model checkpoint file");
        sub->add_option("--loss-mode", loss_mode, "adgan | acgan | vanilla");
        sub->add_option("--reg", reg_kind, "dropout | dropblock | adapdrop | none");
        sub->add_option("--b-size", b_size, "regularizer block size (odd)");
        sub->add_option("--k", k, "adapdrop drop percentile in [0,100]");
        sub->add_option("--patch-size", patch_size, "patch side length (odd)");
        sub->add_option("--epochs", epochs, "training epochs");
        sub->add_option("--batch-size", batch_size, "training batch size");
        return sub;
    };

    auto* s_synth = add_common(app.add_subcommand("synth", "write a synthetic HSC dataset"));
    auto* s_prepare = add_common(app.add_subcommand("prepare", "PCA + normalize + patch summary"));
    auto* s_train = add_common(app.add_subcommand("train", "train the adversarial classifier"));
    auto* s_eval = add_common(app.add_subcommand("eval", "metrics and classification map"));
    auto* s_generate = add_common(app.add_subcommand("generate", "sample grid + diversity report"));
    auto* s_demo = add_common(app.add_subcommand("demo-drop", "regularizer mask visualizations"));
    s_demo->add_option("--map", demo_map, "PGM feature map to regularize");
    auto* s_sweep = add_common(app.add_subcommand("sweep", "accuracy grid over one parameter"));
    s_sweep->add_option("--grid", grid, "b_size | k | patch_size | depth");

    CLI11_PARSE(app, argc, argv);

    try {
        thread_cap();  // validate ADGAN_THREADS up front
        ExperimentConfig cfg;
        if (!config_file.empty()) {
            std::ifstream f(config_file);
            check(f.good(), "cannot open config " + config_file);
            json j = json::parse(f);
            // accept a manifest.json produced by a previous run
            if (j.contains("config") && j.contains("version")) j = j.at("config");
            apply_config_json(cfg, j);
        }
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (!out_dir.empty()) cfg.out = out_dir;
        if (!dataset_dir.empty()) cfg.dataset = dataset_dir;
        if (!checkpoint_file.empty()) cfg.checkpoint = checkpoint_file;
        if (!loss_mode.empty()) cfg.model.loss_mode = loss_mode_from_name(loss_mode);
        if (!reg_kind.empty()) cfg.model.reg.kind = reg_kind_from_name(reg_kind);
        if (b_size >= 0) cfg.model.reg.b_size = b_size;
        if (k >= 0) cfg.model.reg.k = k;
        if (patch_size >= 0) cfg.model.S = patch_size;
        if (epochs >= 0) cfg.train.epochs = epochs;
        if (batch_size >= 0) cfg.train.batch_size = batch_size;
        if (!grid.empty()) cfg.grid = grid;
        // default dataset: the one this output directory's `synth` produced
        if (cfg.dataset.empty() && fs::exists(cfg.out / "dataset" / "meta.json"))
            cfg.dataset = cfg.out / "dataset";

        if (*s_synth) return cmd_synth(cfg);
        if (*s_prepare) return cmd_prepare(cfg);
        if (*s_train) return cmd_train(cfg);
        if (*s_eval) return cmd_eval(cfg);
        if (*s_generate) return cmd_generate(cfg);
        if (*s_demo) return cmd_demo_drop(cfg, demo_map);
        if (*s_sweep) return cmd_sweep(cfg);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (auto& ch : msg)
            if (ch == '\n') ch = ' ';
        std::cerr << "error: " << msg << "\n";
        return 1;
    }
}
