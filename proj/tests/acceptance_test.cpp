// Acceptance gate: one test per shipping criterion, each ending with a
// printed "[criterion N] PASS/FAIL - ..." line. Tolerances are pinned here
// and nowhere else; a change to any of them is a deliberate release decision.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "burstforge/grad_check.hpp"
#include "burstforge/metrics.hpp"
#include "burstforge/model.hpp"
#include "burstforge/simulate.hpp"
#include "burstforge/train.hpp"
#include "test_util.hpp"

using namespace burstforge;
namespace fs = std::filesystem;

namespace {

// Prints the verdict when the test body finishes, pass or fail.
struct CriterionLine {
    int n;
    const char* desc;
    ~CriterionLine() {
        std::printf("[criterion %d] %s - %s\n", n,
                    ::testing::Test::HasFailure() ? "FAIL" : "PASS", desc);
        std::fflush(stdout);
    }
};

Tensor<double> rand_t(const Shape& s, std::uint64_t seed, double lo, double hi,
                      bool rg = true) {
    auto t = Tensor<double>::uniform(s, seed);
    for (auto& v : t.vec()) v = lo + (hi - lo) * v;
    t.set_requires_grad(rg);
    return t;
}

void nudge_off_kinks(Tensor<double>& t) {
    for (auto& v : t.vec()) {
        const double frac = v - std::floor(v);
        if (frac < 2e-3) v += 4e-3;
        if (frac > 1.0 - 2e-3) v -= 4e-3;
    }
}

double dot_all(const Tensor<double>& a, const Tensor<double>& b) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i] * b.data()[i];
    return acc;
}

template <typename T>
std::vector<Tensor<T>> store_tensors(ParamStore<T>& ps) {
    std::vector<Tensor<T>> out;
    for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(ps.tensor(i));
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TEST(Acceptance, Criterion01GradientIntegrity) {
    CriterionLine line{1, "all operators and blocks pass f64 gradient checks (rel err < 1e-4)"};
    const auto t0 = std::chrono::steady_clock::now();
    const double kTol = 1e-4;
    const double kEps = 1e-5;

    {
        auto x = rand_t({3, 5, 5}, 1001, -1, 1);
        auto w = rand_t({4, 3, 3, 3}, 1002, -1, 1);
        auto b = rand_t({4}, 1003, -1, 1);
        auto d = rand_t({4, 5, 5}, 1004, -1, 1, false);
        auto r = grad_check([&] { return sum_all(mul(conv2d(x, w, b), d)); }, {x, w, b}, kEps);
        EXPECT_LT(r.max_rel_err, kTol) << "conv2d stride 1";
    }
    {
        auto x = rand_t({4, 6, 6}, 1011, -1, 1);
        auto w = rand_t({4, 2, 3, 3}, 1012, -1, 1);
        Tensor<double> nb;
        auto d = rand_t({4, 3, 3}, 1013, -1, 1, false);
        auto r = grad_check([&] { return sum_all(mul(conv2d(x, w, nb, 2, 1, 2), d)); },
                            {x, w}, kEps);
        EXPECT_LT(r.max_rel_err, kTol) << "conv2d stride 2 groups 2";
    }
    {
        auto x = rand_t({3, 4, 4}, 1021, -1, 1);
        auto w = rand_t({3, 2, 3, 3}, 1022, -1, 1);
        Tensor<double> nb;
        auto d = rand_t({2, 8, 8}, 1023, -1, 1, false);
        auto r = grad_check([&] { return sum_all(mul(transposed_conv2d_x2(x, w, nb), d)); },
                            {x, w}, kEps);
        EXPECT_LT(r.max_rel_err, kTol) << "transposed conv x2";
    }
    {
        auto f = rand_t({2, 5, 5}, 1031, -1, 1);
        auto c = rand_t({2, 5, 5}, 1032, 0.55, 3.45);
        nudge_off_kinks(c);
        auto d = rand_t({2, 5, 5}, 1033, -1, 1, false);
        auto r = grad_check([&] { return sum_all(mul(bilinear_sample(f, c), d)); }, {f, c}, kEps);
        EXPECT_LT(r.max_rel_err, kTol) << "bilinear_sample";
    }
    {
        auto x = rand_t({2, 5, 5}, 1041, -1, 1);
        auto w = rand_t({2, 2, 3, 3}, 1042, -1, 1);
        auto off = rand_t({18, 5, 5}, 1043, -0.45, 0.45);
        nudge_off_kinks(off);
        auto m = rand_t({9, 5, 5}, 1044, 0.2, 0.8);
        auto d = rand_t({2, 5, 5}, 1045, -1, 1, false);
        auto r = grad_check([&] { return sum_all(mul(deform_conv2d(x, w, off, m), d)); },
                            {x, w, off, m}, kEps);
        EXPECT_LT(r.max_rel_err, kTol) << "deform_conv2d";
    }
    {
        ParamStore<double> ps(31);
        Gca<double> gca(ps, "g", 4, 2);
        auto x = rand_t({4, 4, 4}, 1051, -1, 1);
        auto d = rand_t({4, 4, 4}, 1052, -1, 1, false);
        auto inputs = store_tensors(ps);
        inputs.push_back(x);
        auto r = grad_check([&] { return sum_all(mul(gca(x), d)); }, inputs, kEps);
        EXPECT_LT(r.max_rel_err, kTol) << "global context attention";
    }
    {
        ParamStore<double> ps(32);
        Rgcab<double> block(ps, "b", 4, 2);
        auto x = rand_t({4, 4, 4}, 1061, -1, 1);
        auto d = rand_t({4, 4, 4}, 1062, -1, 1, false);
        auto inputs = store_tensors(ps);
        inputs.push_back(x);
        auto r = grad_check([&] { return sum_all(mul(block(x), d)); }, inputs, kEps);
        EXPECT_LT(r.max_rel_err, kTol) << "residual GCA block";
    }
    {
        ParamStore<double> ps(33);
        PseudoBurstFuser<double> fuser(ps, "pbff", 2, 4);
        auto e0 = rand_t({4, 3, 3}, 1071, -1, 1);
        auto e1 = rand_t({4, 3, 3}, 1072, -1, 1);
        auto d = rand_t({4, 3, 3}, 1073, -1, 1, false);
        auto inputs = store_tensors(ps);
        inputs.push_back(e0);
        inputs.push_back(e1);
        auto r = grad_check(
            [&] {
                auto pseudo = fuser({e0, e1});
                Tensor<double> loss = Tensor<double>::zeros({1});
                for (auto& p : pseudo) loss = add(loss, sum_all(mul(p, d)));
                return loss;
            },
            inputs, kEps);
        EXPECT_LT(r.max_rel_err, kTol) << "pseudo-burst generation";
    }
    {
        ParamStore<double> ps(34);
        LevelMerger<double> lvl(ps, "lvl", 4, 4, MergeMode::flat);
        std::vector<Tensor<double>> members;
        for (int i = 0; i < 4; ++i) members.push_back(rand_t({4, 4, 4}, 1081 + i, -1, 1));
        auto d = rand_t({4, 4, 4}, 1088, -1, 1, false);
        auto inputs = store_tensors(ps);
        for (auto& m : members) inputs.push_back(m);
        auto r = grad_check(
            [&] { return sum_all(mul(lvl.merge(members, lvl.attention(members)), d)); },
            inputs, kEps);
        EXPECT_LT(r.max_rel_err, kTol) << "group attention + merge";
    }
    {
        ModelConfig cfg;
        cfg.task = Task::lowlight;
        cfg.burst_size = 2;
        cfg.features = 16;
        cfg.seed = 9;
        BurstNet<double> model(cfg);
        std::vector<Tensor<double>> frames = {rand_t({4, 4, 4}, 1091, 0, 1),
                                              rand_t({4, 4, 4}, 1092, 0, 1)};
        auto gt = rand_t({3, 8, 8}, 1093, 0, 1, false);
        auto r = grad_check([&] { return l1_loss(model.forward(frames), gt); }, frames, kEps);
        EXPECT_LT(r.max_rel_err, kTol) << "full tiny model vs L1 loss";
    }

    EXPECT_LT(seconds_since(t0), 300.0) << "gradient suite exceeded its runtime budget";
}

TEST(Acceptance, Criterion02DeformableReduction) {
    CriterionLine line{2, "deformable conv with zero offsets and unit masks equals plain conv (< 1e-6)"};
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::uint64_t s = 2000 + 3 * trial;
        auto x = rand_t({3, 8, 8}, s, -1, 1, false);
        auto w = rand_t({2, 3, 3, 3}, s + 1, -1, 1, false);
        auto off = Tensor<double>::zeros({18, 8, 8});
        auto m = Tensor<double>::full({9, 8, 8}, 1.0);
        Tensor<double> nb;
        auto a = deform_conv2d(x, w, off, m);
        auto b = conv2d(x, w, nb);
        for (std::int64_t i = 0; i < a.numel(); ++i)
            worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Acceptance, Criterion03TransposedConvAdjoint) {
    CriterionLine line{3, "strided conv and x2 transposed conv satisfy the adjoint identity (< 1e-6)"};
    double worst = 0.0;
    Rng rng(3001);
    for (int trial = 0; trial < 20; ++trial) {
        const std::int64_t a = 1 + static_cast<std::int64_t>(rng.uniform() * 3);
        const std::int64_t b = 1 + static_cast<std::int64_t>(rng.uniform() * 3);
        const std::int64_t h = 2 + static_cast<std::int64_t>(rng.uniform() * 4);
        const std::int64_t wd = 2 + static_cast<std::int64_t>(rng.uniform() * 4);
        auto w = rand_t({a, b, 3, 3}, 3010 + 5 * trial, -1, 1, false);
        auto y = rand_t({b, 2 * h, 2 * wd}, 3011 + 5 * trial, -1, 1, false);
        auto t = rand_t({a, h, wd}, 3012 + 5 * trial, -1, 1, false);
        Tensor<double> nb;
        const double lhs = dot_all(conv2d(y, w, nb, 2, 1), t);
        const double rhs = dot_all(y, transposed_conv2d_x2(t, w, nb));
        worst = std::max(worst, std::abs(lhs - rhs) / std::abs(lhs));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Acceptance, Criterion04AttentionNormalization) {
    CriterionLine line{4, "group attention maps are normalized at every upsampling level (1 +/- 1e-6)"};
    struct Case {
        Task task;
        std::int64_t burst, features;
        std::size_t expected_maps;
    };
    // f=64 exercises the full 16 -> 4 -> 1 ladder (21 maps), f=16 the short one.
    const Case cases[] = {{Task::sr_x4, 4, 64, 21}, {Task::lowlight, 2, 16, 5}};
    for (const auto& c : cases) {
        ModelConfig cfg;
        cfg.task = c.task;
        cfg.burst_size = c.burst;
        cfg.features = c.features;
        cfg.seed = 4;
        BurstNet<float> model(cfg);
        std::vector<Tensor<float>> frames;
        for (std::int64_t b = 0; b < c.burst; ++b)
            frames.push_back(Tensor<float>::uniform({4, 8, 8}, 4000 + b));
        std::vector<Tensor<float>> atts;
        model.forward(frames, &atts);
        EXPECT_EQ(atts.size(), c.expected_maps) << task_name(c.task);
        double worst = 0.0;
        for (const auto& a : atts) {
            auto sums = sum_axis(a, 0);
            for (const float& v : sums.vec())
                worst = std::max(worst, std::abs(static_cast<double>(v) - 1.0));
        }
        EXPECT_LT(worst, 1e-6) << task_name(c.task);
    }
}

TEST(Acceptance, Criterion05PseudoBurstChannelLocality) {
    CriterionLine line{5, "pseudo-burst channels stay local: zero leak outside the perturbed channel"};
    ParamStore<float> ps(51);
    PseudoBurstFuser<float> fuser(ps, "pbff", 3, 8);
    std::vector<Tensor<float>> e;
    for (int b = 0; b < 3; ++b) e.push_back(Tensor<float>::uniform({8, 6, 6}, 5000 + b));
    auto before = fuser(e);
    const int perturbed = 5;
    for (std::int64_t i = 0; i < 36; ++i) e[1].data()[perturbed * 36 + i] += 0.25f;
    auto after = fuser(e);
    double leak = 0.0;
    double moved = 0.0;
    for (std::size_t c = 0; c < before.size(); ++c) {
        double diff = 0.0;
        for (std::int64_t i = 0; i < before[c].numel(); ++i)
            diff = std::max(diff, std::abs(static_cast<double>(before[c].data()[i]) -
                                           after[c].data()[i]));
        if (static_cast<int>(c) == perturbed)
            moved = diff;
        else
            leak = std::max(leak, diff);
    }
    EXPECT_EQ(leak, 0.0);
    EXPECT_GT(moved, 0.0);
}

TEST(Acceptance, Criterion06ShapePipeline) {
    CriterionLine line{6,
                       "shapes: sr_x4 [14,4,24,24]->[3,192,192], denoise [8,1,128,128]->[1,128,128], groups 16->4->1"};
    EXPECT_EQ(agu_group_sequence(64), (std::vector<std::int64_t>{16, 4, 1}));

    {
        ModelConfig cfg;
        cfg.task = Task::sr_x4;
        cfg.burst_size = 14;
        cfg.features = 64;
        cfg.seed = 6;
        BurstNet<float> model(cfg);
        std::vector<Tensor<float>> frames;
        for (int b = 0; b < 14; ++b)
            frames.push_back(Tensor<float>::uniform({4, 24, 24}, 6000 + b));
        auto out = model.forward(frames);
        EXPECT_EQ(out.shape(), (Shape{3, 192, 192}));
    }
    {
        // Denoising at the published 128px extent; the compact width keeps the
        // single-core runtime inside the suite budget while the full-width
        // grouping ladder is already covered by the structural check above.
        ModelConfig cfg;
        cfg.task = Task::denoise_gray;
        cfg.burst_size = 8;
        cfg.features = 16;
        cfg.seed = 6;
        BurstNet<float> model(cfg);
        std::vector<Tensor<float>> frames;
        for (int b = 0; b < 8; ++b)
            frames.push_back(Tensor<float>::uniform({1, 128, 128}, 6100 + b));
        auto out = model.forward(frames);
        EXPECT_EQ(out.shape(), (Shape{1, 128, 128}));
    }
}

TEST(Acceptance, Criterion07NoiseModel) {
    CriterionLine line{7, "noise gain table matches its frozen constants; MC variance within 3%"};
    struct Row {
        int gain;
        double e_read, e_shot;
        bool unseen;
    };
    const Row rows[] = {{1, -2.2, -2.6, false},
                        {2, -1.8, -2.2, false},
                        {4, -1.4, -1.8, false},
                        {8, -1.1, -1.5, true}};
    for (const auto& r : rows) {
        const NoiseParams p = noise_for_gain(r.gain);
        EXPECT_NEAR(p.sigma_read, std::pow(10.0, r.e_read), 1e-12 * p.sigma_read);
        EXPECT_NEAR(p.sigma_shot, std::pow(10.0, r.e_shot), 1e-12 * p.sigma_shot);
        EXPECT_EQ(p.unseen, r.unseen);
    }

    double worst = 0.0;
    int combo = 0;
    for (const auto& r : rows)
        for (double x : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const NoiseParams p = noise_for_gain(r.gain);
            const auto clean = Tensor<float>::full({1, 1000, 1000}, static_cast<float>(x));
            const auto noisy = add_noise(clean, p, 7000 + combo++);
            double m1 = 0.0, m2 = 0.0;
            for (std::int64_t i = 0; i < noisy.numel(); ++i) {
                const double d = noisy.data()[i] - x;
                m1 += d;
                m2 += d * d;
            }
            const double n = static_cast<double>(noisy.numel());
            const double var = m2 / n - (m1 / n) * (m1 / n);
            const double want = p.sigma_read * p.sigma_read + p.sigma_shot * x;
            worst = std::max(worst, std::abs(var - want) / want);
        }
    EXPECT_LT(worst, 0.03);
}

TEST(Acceptance, Criterion08OverfitSmokeTest) {
    CriterionLine line{8, "tiny SR model overfits one burst: final L1 <= first/5 within 500 steps"};
    const auto t0 = std::chrono::steady_clock::now();

    SimParams p = SimParams::defaults_for(Task::sr_x4);
    p.burst = 4;
    p.crop = 16;  // packed 8x8 input
    p.scale = 2;
    auto src = make_test_image(64, 64, 808);
    BurstSample s = make_burst(src, p, 809);
    ASSERT_EQ(s.frames[0].shape(), (Shape{4, 8, 8}));
    ASSERT_EQ(s.ground_truth.shape(), (Shape{3, 32, 32}));

    ModelConfig cfg;
    cfg.task = Task::sr_x4;
    cfg.burst_size = 4;
    cfg.features = 16;
    cfg.seed = 8;
    BurstNet<float> model(cfg);
    Adam<float> opt(model.params());

    double first = 0.0, last = 0.0;
    for (int step = 0; step < 500; ++step) {
        Tape<float> tape;
        auto pred = model.forward(s.frames);
        auto loss = l1_loss(pred, s.ground_truth);
        last = loss.data()[0];
        if (step == 0) first = last;
        tape.backward(loss);
        opt.step(1e-3);
        model.params().zero_grads();
    }
    std::printf("  overfit: L1 %.6f -> %.6f after 500 steps\n", first, last);
    EXPECT_LE(last, first / 5.0);
    EXPECT_LT(seconds_since(t0), 600.0) << "overfit loop exceeded its runtime budget";
}

TEST(Acceptance, Criterion09MetricOracles) {
    CriterionLine line{9, "PSNR/SSIM oracles: 12.04 dB constants, SSIM(identical)=1, symmetric, flip-invariant"};
    auto a = Tensor<float>::full({3, 16, 16}, 0.5f);
    auto b = Tensor<float>::full({3, 16, 16}, 0.25f);
    EXPECT_NEAR(psnr(a, b), 12.04, 0.01);

    auto x = Tensor<float>::uniform({3, 16, 16}, 901);
    for (auto& v : x.vec()) v = 0.5f + 0.4f * v;
    EXPECT_NEAR(ssim(x, x), 1.0, 1e-9);

    auto y = Tensor<float>::uniform({3, 16, 16}, 902);
    for (auto& v : y.vec()) v = 0.5f + 0.4f * v;
    EXPECT_NEAR(psnr(x, y), psnr(y, x), 1e-12);
    EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-9);

    auto xf = flip_image(x, true, true);
    auto yf = flip_image(y, true, true);
    EXPECT_NEAR(psnr(x, y), psnr(xf, yf), 1e-9);
    EXPECT_NEAR(ssim(x, y), ssim(xf, yf), 1e-9);
}

TEST(Acceptance, Criterion10Determinism) {
    CriterionLine line{10, "simulate/train/infer are byte-identical across reruns at thread cap 1"};
    auto dir = bftest::scratch_dir("acceptance_det");
    const std::string bin = std::string("BURSTFORGE_THREADS=1 ") + BURSTFORGE_CLI_PATH;

    nlohmann::json cfg = {
        {"model", {{"task", "denoise_gray"}, {"burst_size", 2}, {"features", 16}, {"seed", 1}}},
        {"train",
         {{"steps", 3}, {"checkpoint_interval", 3}, {"seed", 2}, {"augment", false}}},
        {"data",
         {{"count", 1},
          {"procedural_count", 1},
          {"crop", 8},
          {"max_translation", 2.0},
          {"max_rotation_deg", 0.0}}}};
    bftest::write_text(dir / "cfg.json", cfg.dump(2));
    const std::string cfg_arg = " --config " + (dir / "cfg.json").string();

    for (const char* run : {"a", "b"}) {
        auto r1 = bftest::run_cmd(bin + " simulate" + cfg_arg + " --out " +
                                  (dir / ("ds_" + std::string(run))).string());
        ASSERT_EQ(r1.exit_code, 0) << r1.output;
        auto r2 = bftest::run_cmd(bin + " train" + cfg_arg + " --out " +
                                  (dir / ("run_" + std::string(run))).string());
        ASSERT_EQ(r2.exit_code, 0) << r2.output;
        auto r3 = bftest::run_cmd(bin + " infer --ckpt " +
                                  (dir / ("run_" + std::string(run)) / "checkpoint.bfn").string() +
                                  " --burst " + (dir / ("ds_" + std::string(run)) / "sample_0000").string() +
                                  " --out " + (dir / ("out_" + std::string(run) + ".png")).string());
        ASSERT_EQ(r3.exit_code, 0) << r3.output;
    }

    EXPECT_TRUE(bftest::same_tree(dir / "ds_a" / "sample_0000", dir / "ds_b" / "sample_0000"));
    EXPECT_TRUE(bftest::same_bytes(dir / "run_a" / "checkpoint.bfn",
                                   dir / "run_b" / "checkpoint.bfn"));
    EXPECT_TRUE(bftest::same_bytes(dir / "run_a" / "train_log.csv",
                                   dir / "run_b" / "train_log.csv"));
    EXPECT_TRUE(bftest::same_bytes(dir / "out_a.png", dir / "out_b.png"));
    fs::remove_all(dir);
}

TEST(Acceptance, Criterion11ParameterCountSanity) {
    CriterionLine line{11, "full SR config parameter count within 25% of the 6.67M reference"};
    ModelConfig cfg;
    cfg.task = Task::sr_x4;
    cfg.burst_size = 14;
    cfg.features = 64;
    cfg.seed = 0;
    BurstNet<float> model(cfg);
    const std::int64_t n = model.parameter_count();
    std::printf("  parameter count: %lld (%.3fx of the 6.67M reference)\n",
                static_cast<long long>(n), static_cast<double>(n) / 6.67e6);
    EXPECT_GE(n, 5002500);
    EXPECT_LE(n, 8337500);
}
