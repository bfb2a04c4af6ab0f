#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "rdcl/io/image.hpp"
#include "rdcl/io/synthetic.hpp"
#include "rdcl/training.hpp"

using namespace rdcl;
using namespace rdcl::train;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.context = context::ContextKind::hyperprior;
    c.transform_config.M = 16;
    c.transform_config.N = 8;
    c.transform_config.width = 8;
    c.transform_config.seed = 31;
    return c;
}

Dataset synthetic_set(int n, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> imgs;
    for (int i = 0; i < n; ++i) imgs.push_back(io::synthetic_image(h, w, rng));
    return Dataset::from_tensors(imgs);
}

PhaseSchedule small_schedule(std::vector<Phase> phases) {
    PhaseSchedule s;
    s.phases = std::move(phases);
    s.batch_size = 2;
    s.crop = 64;
    s.initial_lr = 1e-3;
    return s;
}

std::vector<std::vector<float>> snapshot(CompressionModel& m) {
    std::vector<std::vector<float>> out;
    for (const auto* p : m.params()) out.push_back(p->value);
    return out;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST(RdLoss, RateOnlyWhenPerfect) {
    const Tensor x(3, 4, 4, 0.5f);
    EXPECT_DOUBLE_EQ(rd_loss(x, x, 8.0, 16.0, 0.0018), 0.5);
}

TEST(RdLoss, CombinesRateAndScaledDistortion) {
    const Tensor x(3, 10, 10, 0.25f);
    Tensor xh = x;
    const float d = static_cast<float>(std::sqrt(0.001));
    for (std::size_t i = 0; i < xh.size(); ++i) xh[i] += i % 2 ? d : -d;
    // 0.5 + 0.0018 * 255^2 * 0.001
    EXPECT_NEAR(rd_loss(x, xh, 50.0, 100.0, 0.0018), 0.617045, 1e-6);
    EXPECT_LT(rd_loss(x, xh, 50.0, 100.0, 0.001), rd_loss(x, xh, 50.0, 100.0, 0.01));
}

TEST(RdLoss, NonFiniteInputsThrow) {
    const Tensor x(3, 2, 2, 0.5f);
    Tensor bad = x;
    bad[1] = std::nanf("");
    EXPECT_THROW(rd_loss(x, bad, 1.0, 4.0, 0.01), TrainingError);
    EXPECT_THROW(rd_loss(x, x, std::nan(""), 4.0, 0.01), TrainingError);
}

TEST(Schedule, DefaultPhases) {
    const auto s = default_schedule();
    ASSERT_EQ(s.phases.size(), 3u);
    EXPECT_EQ(s.phases[0], (Phase{LambdaPolicy::fixed, 1.44, QuantizerMode::noise, 100}));
    EXPECT_EQ(s.phases[1].policy, LambdaPolicy::uniform);
    EXPECT_EQ(s.phases[1].quantizer, QuantizerMode::noise);
    EXPECT_EQ(s.phases[1].epochs, 80);
    EXPECT_EQ(s.phases[2].policy, LambdaPolicy::uniform);
    EXPECT_EQ(s.phases[2].quantizer, QuantizerMode::ste);
    EXPECT_EQ(s.phases[2].epochs, 70);
    EXPECT_EQ(s.total_epochs(), 250);
    EXPECT_EQ(s.batch_size, 32);
    EXPECT_DOUBLE_EQ(s.initial_lr, 2e-4);
    EXPECT_EQ(s.plateau_patience, 10);
    EXPECT_DOUBLE_EQ(s.plateau_factor, 0.5);
    EXPECT_TRUE(s.reset_lr_each_phase);
    EXPECT_NO_THROW(s.validate());
}

TEST(Schedule, DeskScaleRoundsUp) {
    const auto s = desk_schedule();
    EXPECT_EQ(s.phases[0].epochs, 5);
    EXPECT_EQ(s.phases[1].epochs, 4);
    EXPECT_EQ(s.phases[2].epochs, 4);
    EXPECT_THROW(scaled_schedule(s, 0), ConfigError);
}

TEST(Schedule, JsonRoundTripAndValidation) {
    auto s = desk_schedule();
    s.batch_size = 8;
    s.crop = 128;
    EXPECT_EQ(schedule_from_json(to_json(s)), s);
    const auto partial = schedule_from_json(nlohmann::json{{"batch_size", 4}});
    EXPECT_EQ(partial.batch_size, 4);
    EXPECT_EQ(partial.phases, default_schedule().phases);
    EXPECT_THROW(schedule_from_json(nlohmann::json{{"crop", 100}}), ConfigError);
    auto bad = s;
    bad.phases[1].epochs = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Dataset, CropOffsetsCoverValidRange) {
    Rng rng(1);
    const Dataset d = Dataset::from_tensors({io::synthetic_image(420, 640, rng)});
    CropStream stream(d, 256, 1, 7);
    int min_top = 1 << 30, max_top = -1, min_left = 1 << 30, max_left = -1;
    for (int e = 0; e < 400; ++e) {
        stream.new_epoch();
        const auto b = stream.next();
        ASSERT_TRUE(b);
        ASSERT_EQ(b->crops[0].shape(), (Shape{3, 256, 256}));
        const auto [top, left] = b->offsets[0];
        min_top = std::min(min_top, top), max_top = std::max(max_top, top);
        min_left = std::min(min_left, left), max_left = std::max(max_left, left);
        EXPECT_FALSE(stream.next());
    }
    EXPECT_GE(min_top, 0);
    EXPECT_LE(max_top, 164);
    EXPECT_GE(min_left, 0);
    EXPECT_LE(max_left, 384);
    EXPECT_LT(min_top, 16);
    EXPECT_GT(max_top, 148);
    EXPECT_LT(min_left, 32);
    EXPECT_GT(max_left, 352);
}

TEST(Dataset, CropStreamIsSeededAndVisitsEveryImage) {
    const Dataset d = synthetic_set(7, 80, 96, 2);
    auto collect = [&](std::uint64_t seed) {
        CropStream s(d, 64, 3, seed);
        std::vector<std::pair<int, int>> offs;
        std::multiset<std::size_t> ids;
        s.new_epoch();
        while (auto b = s.next()) {
            offs.insert(offs.end(), b->offsets.begin(), b->offsets.end());
            ids.insert(b->source_ids.begin(), b->source_ids.end());
        }
        EXPECT_EQ(ids.size(), 7u);
        EXPECT_EQ(std::set<std::size_t>(ids.begin(), ids.end()).size(), 7u);
        return offs;
    };
    EXPECT_EQ(collect(5), collect(5));
    EXPECT_NE(collect(5), collect(6));
}

TEST(Dataset, LoadSkipsSmallImages) {
    TempDir dir("rdcl_dataset_test");
    Rng rng(3);
    io::write_png(dir.path / "a_big.png", io::synthetic_image(300, 280, rng));
    io::write_png(dir.path / "b_small.png", io::synthetic_image(100, 400, rng));
    std::vector<std::string> skipped;
    const auto d = Dataset::load(dir.path, 256, &skipped);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d.at(0).height, 300);
    EXPECT_EQ(d.at(0).width, 280);
    ASSERT_EQ(skipped.size(), 1u);
    EXPECT_NE(skipped[0].find("b_small"), std::string::npos);
    EXPECT_THROW(Dataset::load(dir.path, 512), DataError);
}

TEST(Dataset, SplitIsDeterministicAndDisjoint) {
    const Dataset d = synthetic_set(20, 64, 64, 4);
    const auto [tr, va] = d.split(0.05, 9);
    EXPECT_EQ(tr.size(), 19u);
    EXPECT_EQ(va.size(), 1u);
    const auto [tr2, va2] = d.split(0.05, 9);
    EXPECT_EQ(va.at(0).rgb, va2.at(0).rgb);
    for (std::size_t i = 0; i < tr.size(); ++i) EXPECT_NE(tr.at(i).rgb, va.at(0).rgb);
    const auto [tr3, va3] = d.split(0.25, 9);
    EXPECT_EQ(va3.size(), 5u);
}

TEST(Trainer, ProbesFollowLambdaPolicyAndQuantizer) {
    CompressionModel m(tiny_config());
    const Dataset train = synthetic_set(8, 64, 64, 5), val = synthetic_set(1, 64, 64, 6);
    const auto sched = small_schedule({{LambdaPolicy::fixed, 1.44, QuantizerMode::noise, 1},
                                       {LambdaPolicy::uniform, 0.0, QuantizerMode::ste, 3}});
    std::vector<StepProbe> probes;
    TrainOptions opt;
    opt.seed = 1;
    opt.on_step = [&](const StepProbe& p) { probes.push_back(p); };
    Trainer t(m, sched, train, val, opt);
    t.train_full();
    ASSERT_EQ(probes.size(), 16u);
    const auto& grid = m.config().grid;
    std::set<std::size_t> seen;
    for (const auto& p : probes) {
        EXPECT_EQ(p.lambda, grid.values[p.gain_index]);
        if (p.phase == 0) {
            EXPECT_EQ(p.gain_index, grid.index_of(1.44));
            EXPECT_EQ(p.quantizer, QuantizerMode::noise);
        } else {
            EXPECT_EQ(p.quantizer, QuantizerMode::ste);
            seen.insert(p.gain_index);
        }
    }
    EXPECT_GE(seen.size(), 4u);
}

TEST(Trainer, SameSeedSameRun) {
    const Dataset train = synthetic_set(6, 64, 64, 7), val = synthetic_set(1, 64, 64, 8);
    const auto sched = small_schedule({{LambdaPolicy::uniform, 0.0, QuantizerMode::noise, 1}});
    auto run = [&](std::uint64_t seed) {
        CompressionModel m(tiny_config());
        TrainOptions opt;
        opt.seed = seed;
        Trainer t(m, sched, train, val, opt);
        const auto logs = t.train_full();
        return std::make_pair(logs.at(0).loss, snapshot(m));
    };
    const auto a = run(3), b = run(3), c = run(4);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
    EXPECT_NE(a.first, c.first);
}

TEST(Trainer, PlateauReducesAndPhaseResetsLearningRate) {
    CompressionModel m(tiny_config());
    const Dataset train = synthetic_set(4, 64, 64, 9), val = synthetic_set(1, 64, 64, 10);
    auto sched = small_schedule({{LambdaPolicy::fixed, 0.0018, QuantizerMode::noise, 3},
                                 {LambdaPolicy::uniform, 0.0, QuantizerMode::noise, 1}});
    sched.plateau_patience = 0;
    sched.plateau_threshold = 0.9;
    TrainOptions opt;
    opt.seed = 2;
    Trainer t(m, sched, train, val, opt);
    const auto logs = t.train_full();
    ASSERT_EQ(logs.size(), 4u);
    EXPECT_DOUBLE_EQ(logs[0].lr, 1e-3);
    EXPECT_DOUBLE_EQ(logs[1].lr, 1e-3);
    EXPECT_TRUE(logs[1].lr_reduced);
    EXPECT_DOUBLE_EQ(logs[2].lr, 5e-4);
    EXPECT_DOUBLE_EQ(logs[3].lr, 1e-3);
    EXPECT_EQ(logs[3].phase, 1);
}

TEST(Trainer, ResumeAtPhaseBoundaryMatchesUninterruptedRun) {
    const Dataset train = synthetic_set(6, 64, 64, 11), val = synthetic_set(1, 64, 64, 12);
    const auto sched = small_schedule({{LambdaPolicy::fixed, 1.44, QuantizerMode::noise, 1},
                                       {LambdaPolicy::uniform, 0.0, QuantizerMode::ste, 1}});
    TrainOptions opt;
    opt.seed = 5;

    CompressionModel full(tiny_config());
    Trainer(full, sched, train, val, opt).train_full();

    CompressionModel first(tiny_config());
    Trainer t1(first, sched, train, val, opt);
    t1.run_phase(0);
    auto loaded = parse_checkpoint(serialize_checkpoint(first, t1.state()));
    EXPECT_EQ(loaded.state.phase, 1);
    Trainer t2(*loaded.model, sched, train, val, opt);
    t2.resume(loaded.state);
    t2.train_full();
    EXPECT_EQ(snapshot(*loaded.model), snapshot(full));
}

TEST(Trainer, DivergenceRestoresLastGoodWeights) {
    TempDir dir("rdcl_diverge_test");
    CompressionModel m(tiny_config());
    const Dataset train = synthetic_set(4, 64, 64, 13), val = synthetic_set(1, 64, 64, 14);
    const auto sched = small_schedule({{LambdaPolicy::uniform, 0.0, QuantizerMode::noise, 3}});
    std::vector<std::vector<float>> good;
    TrainOptions opt;
    opt.seed = 6;
    opt.checkpoint = dir.path / "ck.rdck";
    opt.on_epoch = [&](const EpochLog&) { good = snapshot(m); };
    opt.on_step = [&](const StepProbe& p) {
        if (p.step == 3) m.params()[0]->value[0] = std::nanf("");
    };
    Trainer t(m, sched, train, val, opt);
    EXPECT_THROW(t.train_full(), TrainingError);
    ASSERT_FALSE(good.empty());
    EXPECT_EQ(snapshot(m), good);
    const auto ck = load_checkpoint(*opt.checkpoint);
    EXPECT_EQ(snapshot(*ck.model), good);
    EXPECT_EQ(ck.state.phase, 0);
    EXPECT_EQ(ck.state.epoch, 1);
}

TEST(Trainer, WritesOneLogLinePerEpoch) {
    TempDir dir("rdcl_log_test");
    CompressionModel m(tiny_config());
    const Dataset train = synthetic_set(2, 64, 64, 15), val = synthetic_set(1, 64, 64, 16);
    TrainOptions opt;
    opt.log_path = dir.path / "log.jsonl";
    Trainer t(m, small_schedule({{LambdaPolicy::uniform, 0.0, QuantizerMode::noise, 2}}), train, val, opt);
    t.train_full();
    const auto bytes = io::read_file(*opt.log_path);
    const std::string text(bytes.begin(), bytes.end());
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
    const auto j = nlohmann::json::parse(text.substr(0, text.find('\n')));
    for (const char* key : {"phase", "epoch", "loss", "bpp", "psnr", "lr", "val_loss"}) EXPECT_TRUE(j.contains(key)) << key;
}
