// Tensor and autodiff core: literal-value oracles for every op, tape
// lifecycle rules, and central-difference gradient checks across seeds.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "burstforge/grad_check.hpp"
#include "burstforge/tensor.hpp"

using namespace burstforge;

namespace {

Tensor<double> randt(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0, bool rg = true) {
    Tensor<double> t = Tensor<double>::zeros(shape);
    Rng rng(seed);
    for (auto& v : t.vec()) v = rng.uniform(lo, hi);
    t.set_requires_grad(rg);
    return t;
}

}  // namespace

TEST(TensorCore, FactoriesAndDeterminism) {
    auto z = Tensor<float>::zeros({2, 3});
    EXPECT_EQ(z.numel(), 6);
    for (auto v : z.vec()) EXPECT_EQ(v, 0.0f);

    auto f = Tensor<float>::full({4}, 2.5f);
    for (auto v : f.vec()) EXPECT_EQ(v, 2.5f);

    auto u1 = Tensor<float>::uniform({32}, 7);
    auto u2 = Tensor<float>::uniform({32}, 7);
    auto u3 = Tensor<float>::uniform({32}, 8);
    EXPECT_EQ(u1.vec(), u2.vec());
    EXPECT_NE(u1.vec(), u3.vec());
    for (auto v : u1.vec()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LT(v, 1.0f);
    }

    EXPECT_THROW(Tensor<float>::zeros({}), ValidationError);
    EXPECT_THROW(Tensor<float>::zeros({2, 0}), ValidationError);
    EXPECT_THROW(Tensor<float>::from({3}, {1.0f, 2.0f}), ValidationError);
}

TEST(TensorCore, ElementwiseLiteralValues) {
    auto a = Tensor<double>::from({4}, {1.0, -2.0, 0.5, 3.0});
    auto b = Tensor<double>::from({4}, {0.5, 4.0, -1.0, 2.0});

    auto s = add(a, b);
    auto d = sub(a, b);
    auto m = mul(a, b);
    auto c = scale(a, -2.0);

    std::vector<double> es{1.5, 2.0, -0.5, 5.0};
    std::vector<double> ed{0.5, -6.0, 1.5, 1.0};
    std::vector<double> em{0.5, -8.0, -0.5, 6.0};
    std::vector<double> ec{-2.0, 4.0, -1.0, -6.0};
    for (int i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(s.data()[i], es[i]);
        EXPECT_DOUBLE_EQ(d.data()[i], ed[i]);
        EXPECT_DOUBLE_EQ(m.data()[i], em[i]);
        EXPECT_DOUBLE_EQ(c.data()[i], ec[i]);
    }
}

TEST(TensorCore, ColumnBroadcast) {
    // [2,2,2] + [2,1,1]: channel c gets bias[c] added to every pixel.
    auto x = Tensor<double>::from({2, 2, 2},
                                  {1, 2, 3, 4, 5, 6, 7, 8});
    auto bias = Tensor<double>::from({2, 1, 1}, {10, 100});
    auto y = add(x, bias);
    std::vector<double> expect{11, 12, 13, 14, 105, 106, 107, 108};
    for (int i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(y.data()[i], expect[i]);

    // Symmetric orientation must also work.
    auto y2 = add(bias, x);
    for (int i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(y2.data()[i], expect[i]);

    auto z = mul(x, bias);
    std::vector<double> em{10, 20, 30, 40, 500, 600, 700, 800};
    for (int i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(z.data()[i], em[i]);

    // Shapes that are neither equal nor column-vs-map are rejected.
    auto bad = Tensor<double>::from({3, 1, 1}, {1, 2, 3});
    EXPECT_THROW(add(x, bad), ValidationError);
    EXPECT_THROW(add(Tensor<double>::zeros({4}), Tensor<double>::zeros({5})),
                 ValidationError);
}

TEST(TensorCore, ActivationLiteralValues) {
    auto x = Tensor<double>::from({5}, {-2.0, -0.5, 0.0, 0.5, 3.0});
    auto l = leaky_relu(x);
    EXPECT_DOUBLE_EQ(l.data()[0], -0.4);
    EXPECT_DOUBLE_EQ(l.data()[1], -0.1);
    EXPECT_DOUBLE_EQ(l.data()[2], 0.0);
    EXPECT_DOUBLE_EQ(l.data()[3], 0.5);
    EXPECT_DOUBLE_EQ(l.data()[4], 3.0);

    auto s = sigmoid(x);
    EXPECT_NEAR(s.data()[2], 0.5, 1e-15);
    EXPECT_NEAR(s.data()[0], 1.0 / (1.0 + std::exp(2.0)), 1e-15);
    // Saturation stays finite.
    auto big = sigmoid(Tensor<double>::from({2}, {1e4, -1e4}));
    EXPECT_DOUBLE_EQ(big.data()[0], 1.0);
    EXPECT_DOUBLE_EQ(big.data()[1], 0.0);
}

TEST(TensorCore, MatmulLiteralValues) {
    auto a = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = Tensor<double>::from({3, 2}, {7, 8, 9, 10, 11, 12});
    auto c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{2, 2}));
    EXPECT_DOUBLE_EQ(c.data()[0], 58.0);
    EXPECT_DOUBLE_EQ(c.data()[1], 64.0);
    EXPECT_DOUBLE_EQ(c.data()[2], 139.0);
    EXPECT_DOUBLE_EQ(c.data()[3], 154.0);

    EXPECT_THROW(matmul(a, a), ValidationError);
}

TEST(TensorCore, ReshapeConcatSlice) {
    auto a = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto r = reshape(a, {3, 2});
    EXPECT_EQ(r.shape(), (Shape{3, 2}));
    EXPECT_EQ(r.vec(), a.vec());
    EXPECT_THROW(reshape(a, {4, 2}), ValidationError);

    auto b = Tensor<double>::from({1, 3}, {7, 8, 9});
    auto cat0 = concat<double>({a, b}, 0);
    ASSERT_EQ(cat0.shape(), (Shape{3, 3}));
    std::vector<double> e0{1, 2, 3, 4, 5, 6, 7, 8, 9};
    EXPECT_EQ(cat0.vec(), e0);

    auto c = Tensor<double>::from({2, 1}, {10, 20});
    auto cat1 = concat<double>({a, c}, 1);
    ASSERT_EQ(cat1.shape(), (Shape{2, 4}));
    std::vector<double> e1{1, 2, 3, 10, 4, 5, 6, 20};
    EXPECT_EQ(cat1.vec(), e1);

    // slice(concat(a,b)) recovers a on both axes.
    auto back0 = slice(cat0, 0, 0, 2);
    EXPECT_EQ(back0.vec(), a.vec());
    auto back1 = slice(cat1, 1, 0, 3);
    EXPECT_EQ(back1.vec(), a.vec());

    EXPECT_THROW(slice(a, 0, 1, 1), ValidationError);
    EXPECT_THROW(slice(a, 0, 0, 5), ValidationError);
    EXPECT_THROW(concat<double>({a, c}, 0), ValidationError);
}

TEST(TensorCore, ReductionsAndSoftmax) {
    auto a = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    // The reduced axis is dropped from the result shape.
    auto s0 = sum_axis(a, 0);
    ASSERT_EQ(s0.shape(), (Shape{3}));
    EXPECT_DOUBLE_EQ(s0.data()[0], 5.0);
    EXPECT_DOUBLE_EQ(s0.data()[1], 7.0);
    EXPECT_DOUBLE_EQ(s0.data()[2], 9.0);

    auto s1 = sum_axis(a, 1);
    ASSERT_EQ(s1.shape(), (Shape{2}));
    EXPECT_DOUBLE_EQ(s1.data()[0], 6.0);
    EXPECT_DOUBLE_EQ(s1.data()[1], 15.0);

    auto st = sum_all(a);
    ASSERT_EQ(st.numel(), 1);
    EXPECT_DOUBLE_EQ(st.data()[0], 21.0);

    // softmax([0, ln 3]) = [1/4, 3/4].
    auto sm = softmax(Tensor<double>::from({2, 1}, {0.0, std::log(3.0)}), 0);
    EXPECT_NEAR(sm.data()[0], 0.25, 1e-14);
    EXPECT_NEAR(sm.data()[1], 0.75, 1e-14);

    // Every softmax column sums to one, even with large inputs.
    auto wild = Tensor<double>::from({3, 2}, {500.0, -2.0, 501.0, 0.0, 499.0, 2.0});
    auto smw = softmax(wild, 0);
    for (int col = 0; col < 2; ++col) {
        double s = smw.data()[col] + smw.data()[2 + col] + smw.data()[4 + col];
        EXPECT_NEAR(s, 1.0, 1e-12);
        for (int row = 0; row < 3; ++row) EXPECT_GT(smw.data()[2 * row + col], 0.0);
    }
}

TEST(TensorCore, TapeLifecycleRules) {
    auto x = randt({3}, 11);

    // backward twice on one tape is an error.
    {
        Tape<double> tape;
        auto loss = sum_all(mul(x, x));
        tape.backward(loss);
        EXPECT_THROW(tape.backward(loss), ValidationError);
    }

    // Non-scalar loss rejected.
    {
        Tape<double> tape;
        auto y = mul(x, x);
        EXPECT_THROW(tape.backward(y), ValidationError);
    }

    // Loss produced on a different tape rejected.
    Tensor<double> stale_loss;
    {
        Tape<double> tape;
        stale_loss = sum_all(x);
    }
    {
        Tape<double> tape;
        EXPECT_THROW(tape.backward(stale_loss), ValidationError);
    }

    // Without a tape, ops do not allocate gradients.
    auto q = randt({3}, 12, -1.0, 1.0, false);
    auto y = add(q, q);
    EXPECT_FALSE(y.has_grad());
}

TEST(TensorCore, FanOutAccumulatesGradient) {
    auto x = Tensor<double>::from({3}, {1.0, 2.0, 3.0});
    x.set_requires_grad();
    Tape<double> tape;
    auto loss = sum_all(add(x, x));
    tape.backward(loss);
    ASSERT_TRUE(x.has_grad());
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0);
}

TEST(TensorCore, NonFiniteDetected) {
    auto x = Tensor<double>::from({2}, {1.0, std::numeric_limits<double>::infinity()});
    auto y = Tensor<double>::from({2}, {1.0, 1.0});
    EXPECT_THROW(add(x, y), NumericError);
    EXPECT_THROW(mul(y, x), NumericError);
}

// Composite expression touching every differentiable op; verified against
// central differences for ten seeds.
TEST(TensorCore, GradCheckCompositeAcrossSeeds) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto x = randt({3, 2, 2}, seed * 101);
        auto bias = randt({3, 1, 1}, seed * 101 + 1);
        auto m = randt({4, 6}, seed * 101 + 2);

        auto fn = [&]() {
            auto h = add(x, bias);
            h = leaky_relu(h);
            h = mul(h, sigmoid(x));
            auto flat = reshape(h, {6, 2});
            auto prod = matmul(m, flat);             // [4,2]
            auto sm = softmax(prod, 0);              // columns sum to 1
            auto left = slice(prod, 1, 0, 1);        // [4,1]
            auto joined = concat<double>({sm, scale(left, 0.5)}, 1);
            auto red = sum_axis(joined, 1);          // [4,1]
            return sum_all(mul(red, red));
        };
        auto res = grad_check(fn, {x, bias, m});
        EXPECT_TRUE(res.ok(1e-5))
            << "seed " << seed << " max rel err " << res.max_rel_err << " at "
            << res.worst;
    }
}

TEST(TensorCore, GradCheckReductionsAndConcat) {
    for (std::uint64_t seed : {21, 22, 23}) {
        auto a = randt({2, 3}, seed);
        auto b = randt({2, 3}, seed + 50);
        auto fn = [&]() {
            auto cat = concat<double>({a, b}, 0);     // [4,3]
            auto s = sum_axis(cat, 1);                // [4,1]
            auto part = slice(cat, 0, 1, 3);          // [2,3]
            return add(sum_all(mul(s, s)), sum_all(sigmoid(part)));
        };
        auto res = grad_check(fn, {a, b});
        EXPECT_TRUE(res.ok(1e-5)) << res.max_rel_err << " at " << res.worst;
    }
}
