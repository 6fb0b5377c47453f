// PSNR and SSIM against closed-form constant-image oracles and the usual
// symmetry and invariance properties.

#include <gtest/gtest.h>

#include <cmath>

#include "burstforge/metrics.hpp"
#include "burstforge/simulate.hpp"

using namespace burstforge;

namespace {

Tensor<float> noisy(const Tensor<float>& base, double sigma, std::uint64_t seed) {
    auto out = base.clone();
    Rng rng(seed);
    for (auto& v : out.vec())
        v = static_cast<float>(
            std::min(1.0, std::max(0.0, v + sigma * rng.normal())));
    return out;
}

}  // namespace

TEST(Psnr, ConstantPairOracle) {
    // MSE(0.5, 0.25) = 0.0625 -> 10*log10(1/0.0625) = 12.0412 dB.
    auto a = Tensor<float>::full({3, 8, 8}, 0.5f);
    auto b = Tensor<float>::full({3, 8, 8}, 0.25f);
    EXPECT_NEAR(psnr(a, b), 12.041199826559248, 1e-9);
    EXPECT_NEAR(psnr(a, b), -10.0 * std::log10(0.0625), 1e-12);
}

TEST(Psnr, IdenticalCapAndClamping) {
    auto img = make_test_image(16, 16, 3);
    EXPECT_EQ(psnr(img, img), 100.0);
    // Values beyond [0,1] clamp before comparison: 2.0 vs 1.0 is identical.
    auto over = Tensor<float>::full({1, 4, 4}, 2.0f);
    auto one = Tensor<float>::full({1, 4, 4}, 1.0f);
    EXPECT_EQ(psnr(over, one), 100.0);

    EXPECT_THROW(psnr(img, Tensor<float>::zeros({3, 16, 15})), ValidationError);
}

TEST(Psnr, SymmetricAndFlipInvariant) {
    auto a = make_test_image(16, 16, 5);
    auto b = noisy(a, 0.05, 7);
    EXPECT_NEAR(psnr(a, b), psnr(b, a), 1e-12);
    EXPECT_NEAR(psnr(flip_image(a, true, false), flip_image(b, true, false)),
                psnr(a, b), 1e-9);
    EXPECT_NEAR(psnr(flip_image(a, true, true), flip_image(b, true, true)),
                psnr(a, b), 1e-9);
    // More noise, lower score.
    EXPECT_LT(psnr(a, noisy(a, 0.1, 9)), psnr(a, noisy(a, 0.02, 9)));
}

TEST(Ssim, IdenticalIsOne) {
    auto img = make_test_image(24, 24, 11);
    EXPECT_NEAR(ssim(img, img), 1.0, 1e-9);
}

TEST(Ssim, ConstantPairClosedForm) {
    // Constant images have zero variance, so SSIM reduces to
    // (2*mu_a*mu_b + c1) / (mu_a^2 + mu_b^2 + c1). The means are the stored
    // f32 values, so the bound is set by single precision, not the formula.
    const double ma = static_cast<float>(0.5), mb = static_cast<float>(0.6);
    const double c1 = 1e-4;
    auto a = Tensor<float>::full({1, 16, 16}, static_cast<float>(ma));
    auto b = Tensor<float>::full({1, 16, 16}, static_cast<float>(mb));
    const double want = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    EXPECT_NEAR(ssim(a, b), want, 1e-7);
}

TEST(Ssim, SymmetricFlipInvariantAndOrdered) {
    auto a = make_test_image(20, 20, 13);
    auto b = noisy(a, 0.06, 17);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_NEAR(ssim(flip_image(a, false, true), flip_image(b, false, true)),
                ssim(a, b), 1e-9);
    EXPECT_LT(ssim(a, b), 1.0);
    EXPECT_LT(ssim(a, noisy(a, 0.15, 19)), ssim(a, noisy(a, 0.03, 19)));
    EXPECT_GT(ssim(a, b), 0.0);
}

TEST(Ssim, SizeRequirements) {
    EXPECT_THROW(ssim(Tensor<float>::zeros({1, 10, 16}),
                      Tensor<float>::zeros({1, 10, 16})),
                 ValidationError);
    EXPECT_THROW(ssim(Tensor<float>::zeros({1, 16, 16}),
                      Tensor<float>::zeros({3, 16, 16})),
                 ValidationError);
    // 11x11 exactly is the smallest valid extent: one window position.
    auto a = make_test_image(11, 11, 23);
    EXPECT_NO_THROW(ssim(a, a));
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
}
