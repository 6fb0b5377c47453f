// Pseudo-burst gathering and the shared multi-scale U-Net.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "burstforge/fusion.hpp"
#include "burstforge/grad_check.hpp"

using namespace burstforge;

namespace {

Tensor<double> randt(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(shape);
    Rng rng(seed);
    for (auto& v : t.vec()) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST(PseudoBurst, GatherMatchesManualStack) {
    const std::int64_t burst = 2, f = 3, h = 4, w = 4;
    ParamStore<double> ps(11);
    PseudoBurstFuser<double> fuser(ps, "pb", burst, f);
    Tensor<double>* cw = ps.find("pb.conv.w");
    ASSERT_NE(cw, nullptr);
    ASSERT_EQ(cw->shape(), (Shape{f, burst, 3, 3}));

    std::vector<Tensor<double>> e{randt({f, h, w}, 21), randt({f, h, w}, 22)};
    auto out = fuser(e);
    ASSERT_EQ(out.size(), static_cast<std::size_t>(f));

    Tensor<double> none;
    for (std::int64_t c = 0; c < f; ++c) {
        // Assemble the channel-c stack by hand and run the same shared conv.
        auto stack = Tensor<double>::zeros({burst, h, w});
        for (std::int64_t b = 0; b < burst; ++b)
            for (std::int64_t p = 0; p < h * w; ++p)
                stack.data()[b * h * w + p] = e[b].data()[c * h * w + p];
        auto want = conv2d(stack, *cw, none, 1, 1);
        ASSERT_EQ(out[c].shape(), want.shape());
        for (std::int64_t i = 0; i < want.numel(); ++i)
            ASSERT_DOUBLE_EQ(out[c].data()[i], want.data()[i]) << "pseudo-frame " << c;
    }
}

TEST(PseudoBurst, ChannelPerturbationStaysLocal) {
    const std::int64_t burst = 2, f = 8;
    ParamStore<double> ps(13);
    PseudoBurstFuser<double> fuser(ps, "pb", burst, f);
    std::vector<Tensor<double>> e{randt({f, 6, 6}, 31), randt({f, 6, 6}, 32)};
    auto base = fuser(e);

    auto perturbed = e;
    perturbed[0] = e[0].clone();
    for (std::int64_t p = 0; p < 36; ++p) perturbed[0].data()[3 * 36 + p] += 0.125;
    auto out = fuser(perturbed);

    for (std::int64_t c = 0; c < f; ++c) {
        double diff = 0.0;
        for (std::int64_t i = 0; i < base[c].numel(); ++i)
            diff = std::max(diff, std::abs(out[c].data()[i] - base[c].data()[i]));
        if (c == 3)
            EXPECT_GT(diff, 1e-9) << "perturbed channel must respond";
        else
            EXPECT_EQ(diff, 0.0) << "pseudo-frame " << c << " must not move";
    }
}

TEST(PseudoBurst, BurstSizeMismatchRejected) {
    ParamStore<double> ps(17);
    PseudoBurstFuser<double> fuser(ps, "pb", 3, 4);
    std::vector<Tensor<double>> two{randt({4, 4, 4}, 1), randt({4, 4, 4}, 2)};
    EXPECT_THROW(fuser(two), ValidationError);
    EXPECT_THROW(fuser(std::vector<Tensor<double>>{}), ValidationError);
}

TEST(PseudoBurst, GradCheckThroughSharedConv) {
    ParamStore<double> ps(19);
    PseudoBurstFuser<double> fuser(ps, "pb", 2, 4);
    std::vector<Tensor<double>> e{randt({4, 4, 4}, 41), randt({4, 4, 4}, 42)};
    e[0].set_requires_grad();
    e[1].set_requires_grad();
    std::vector<Tensor<double>> inputs{e[0], e[1], *ps.find("pb.conv.w")};
    auto fn = [&]() {
        auto out = fuser(e);
        // Sum over every pseudo-frame so all weight taps receive gradient.
        Tensor<double> loss = sum_all(mul(out[0], out[0]));
        for (std::size_t c = 1; c < out.size(); ++c)
            loss = add(loss, sum_all(mul(out[c], out[c])));
        return loss;
    };
    auto res = grad_check(fn, inputs);
    EXPECT_TRUE(res.ok(1e-5)) << res.max_rel_err << " at " << res.worst;
}

TEST(MsfUnet, WidthSequence) {
    EXPECT_EQ(msf_width(16), 24);
    EXPECT_EQ(msf_width(24), 36);
    EXPECT_EQ(msf_width(64), 96);
    EXPECT_EQ(msf_width(96), 144);
}

TEST(MsfUnet, ShapePreservingAndWidths) {
    ParamStore<double> ps(23);
    MsfUnet<double> msf(ps, "m", 16);
    EXPECT_EQ(ps.find("m.down1.w")->shape(), (Shape{24, 16, 3, 3}));
    EXPECT_EQ(ps.find("m.down2.w")->shape(), (Shape{36, 24, 3, 3}));
    EXPECT_EQ(ps.find("m.up1.w")->shape(), (Shape{36, 24, 3, 3}));
    EXPECT_EQ(ps.find("m.up2.w")->shape(), (Shape{24, 16, 3, 3}));

    auto x = randt({16, 8, 8}, 51);
    auto y = msf(x);
    EXPECT_EQ(y.shape(), (Shape{16, 8, 8}));

    EXPECT_THROW(msf(randt({16, 6, 8}, 52)), ValidationError);
    EXPECT_THROW(msf(randt({16, 8, 10}, 53)), ValidationError);
}

TEST(MsfUnet, AllZeroWeightsGiveIdentity) {
    // Both skip connections are additive, so a fully zeroed U-Net must pass
    // the input through unchanged; this pins the skip placement.
    ParamStore<double> ps(29);
    MsfUnet<double> msf(ps, "m", 16);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto& t = ps.tensor(i);
        std::fill(t.vec().begin(), t.vec().end(), 0.0);
    }
    auto x = randt({16, 4, 4}, 61);
    auto y = msf(x);
    for (std::int64_t i = 0; i < x.numel(); ++i)
        EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}
