#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "adgan/train.hpp"

using namespace adgan;

namespace {

ModelSpec tiny_spec(LossMode mode = LossMode::kAdgan) {
    ModelSpec s;
    s.S = 8;
    s.K = 2;
    s.depth = 3;
    s.noise_dim = 4;
    s.channels = 2;
    s.g_top = 8;
    s.d_base = 4;
    s.loss_mode = mode;
    s.reg.b_size = 3;
    return s;
}

// small two-class patch set: class-dependent mean plus noise
PatchSet make_patchset(int per_class, std::uint64_t seed) {
    PatchSet ps;
    ps.patch_size = 8;
    ps.channels = 2;
    Rng rng(seed);
    for (int cls = 1; cls <= 2; ++cls)
        for (int i = 0; i < per_class; ++i) {
            ps.labels.push_back(static_cast<std::uint16_t>(cls));
            ps.centers.emplace_back(i, cls);
            for (std::size_t j = 0; j < ps.patch_stride(); ++j) {
                double mean = cls == 1 ? -0.2 : 0.2;
                ps.data.push_back(static_cast<float>(
                    std::clamp(mean + 0.1 * rng.gaussian(), -0.5, 0.5)));
            }
        }
    return ps;
}

}  // namespace

TEST_CASE("train_step with lr=0 leaves every parameter unchanged") {
    for (auto mode : {LossMode::kAdgan, LossMode::kAcgan, LossMode::kVanilla}) {
        Model<float> m(tiny_spec(mode), 3);
        TrainConfig cfg;
        cfg.lr = 0.0;
        cfg.seed = 7;
        Trainer<float> tr;
        tr.init(m, cfg);
        std::vector<std::vector<float>> before;
        for (auto& [n, p] : m.all_params()) before.push_back(p.data());
        auto ps = make_patchset(4, 1);
        std::vector<std::int64_t> idx{0, 1, 4, 5};
        auto images = batch_tensor<float>(ps, idx);
        train_step(tr, images, {1, 1, 2, 2}, cfg);
        std::size_t i = 0;
        for (auto& [n, p] : m.all_params()) REQUIRE(p.data() == before[i++]);
    }
}

TEST_CASE("repeated steps on one batch reduce the discriminator loss for most seeds") {
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Model<float> m(tiny_spec(), seed);
        TrainConfig cfg;
        cfg.lr = 2e-3;
        cfg.seed = seed;
        Trainer<float> tr;
        tr.init(m, cfg);
        auto ps = make_patchset(4, seed + 50);
        std::vector<std::int64_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
        auto images = batch_tensor<float>(ps, idx);
        std::vector<int> labels(ps.labels.begin(), ps.labels.end());
        double first = 0, last = 0;
        for (int s = 0; s < 6; ++s) {
            auto [dl, gl] = train_step(tr, images, labels, cfg);
            if (s == 0) first = dl;
            last = dl;
        }
        if (last < first) ++improved;
    }
    REQUIRE(improved >= 8);
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto run = [] {
        Model<float> m(tiny_spec(), 11);
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 4;
        cfg.seed = 99;
        auto ps = make_patchset(4, 2);
        auto res = train(m, ps, cfg);
        std::vector<float> flat;
        for (auto& [n, p] : res.best_model.all_params())
            flat.insert(flat.end(), p.data().begin(), p.data().end());
        return std::make_pair(res.log.steps, flat);
    };
    auto [steps1, flat1] = run();
    auto [steps2, flat2] = run();
    REQUIRE(steps1.size() == steps2.size());
    for (std::size_t i = 0; i < steps1.size(); ++i) {
        REQUIRE(steps1[i].d_loss == steps2[i].d_loss);
        REQUIRE(steps1[i].g_loss == steps2[i].g_loss);
    }
    REQUIRE(flat1 == flat2);
}

TEST_CASE("train log bookkeeping and best-epoch selection") {
    Model<float> m(tiny_spec(), 21);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.seed = 5;
    auto ps = make_patchset(6, 3);  // 12 samples -> 3 batches of 4
    auto res = train(m, ps, cfg);
    REQUIRE(res.log.epoch_d_loss.size() == 3);
    REQUIRE(res.log.steps.size() == 9);
    REQUIRE(res.log.best_epoch >= 0);
    REQUIRE(res.log.best_epoch < 3);
    // best epoch attains the minimum mean D loss
    double best = *std::min_element(res.log.epoch_d_loss.begin(), res.log.epoch_d_loss.end());
    REQUIRE(res.log.epoch_d_loss[static_cast<std::size_t>(res.log.best_epoch)] == best);
    // selected snapshot is finite everywhere
    for (auto& [n, p] : res.best_model.all_params())
        for (float v : p.data()) REQUIRE(std::isfinite(v));
    // epoch means match the step records
    double m0 = (res.log.steps[0].d_loss + res.log.steps[1].d_loss + res.log.steps[2].d_loss) / 3.0;
    REQUIRE(res.log.epoch_d_loss[0] == Catch::Approx(m0));
}

TEST_CASE("periodic checkpoints are written and reload to the final parameters") {
    auto dir = std::filesystem::temp_directory_path() / "adgan_train_ckpt";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    Model<float> m(tiny_spec(), 8);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 4;
    cfg.checkpoint_dir = dir;
    cfg.checkpoint_every = 1;
    auto ps = make_patchset(4, 9);
    auto res = train(m, ps, cfg);
    REQUIRE(std::filesystem::exists(dir / "epoch_0.ckpt"));
    REQUIRE(std::filesystem::exists(dir / "epoch_1.ckpt"));
    auto loaded = load_checkpoint<float>(dir / "epoch_1.ckpt");
    auto a = m.all_params();
    auto b = loaded.all_params();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].second.data() == b[i].second.data());
    std::filesystem::remove_all(dir);
}

TEST_CASE("oversized batch size falls back to full-batch training") {
    Model<float> m(tiny_spec(), 13);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 100;  // larger than the 8-sample set
    cfg.seed = 2;
    auto ps = make_patchset(4, 4);
    auto res = train(m, ps, cfg);
    REQUIRE(res.log.steps.size() == 1);  // one full batch per epoch
}

TEST_CASE("fake class sampling stays in range and covers all classes") {
    Rng rng(6);
    auto cs = sample_fake_classes(2000, 3, false, {}, rng);
    std::vector<int> counts(4, 0);
    for (int c : cs) {
        REQUIRE(c >= 1);
        REQUIRE(c <= 3);
        ++counts[static_cast<std::size_t>(c)];
    }
    for (int k = 1; k <= 3; ++k) REQUIRE(counts[static_cast<std::size_t>(k)] > 500);

    // empirical matching reproduces a skewed label pool
    std::vector<int> pool(90, 1);
    pool.resize(100, 2);
    auto cs2 = sample_fake_classes(5000, 2, true, pool, rng);
    int ones = 0;
    for (int c : cs2) ones += c == 1;
    REQUIRE(std::abs(ones / 5000.0 - 0.9) < 0.03);
}
