#include <gtest/gtest.h>

#include <cmath>

#include "rdcl/rate_control.hpp"

using namespace rdcl;
using namespace rdcl::rate;

TEST(RateControl, InitGainValues) {
    EXPECT_EQ(init_gain(0.0018, 0.0018).a, 1.0);
    EXPECT_DOUBLE_EQ(init_gain(0.0072, 0.0018).a, 2.0);
    // sqrt(1.44 / 0.0018) to 20 digits: 28.284271247461900976
    EXPECT_NEAR(init_gain(1.44, 0.0018).a, 28.284271247461900976, 1e-12);
    EXPECT_NEAR(init_gain(1.44, 0.0018).a, 28.2843, 5e-5);
}

TEST(RateControl, InitGainRejectsNonPositive) {
    EXPECT_THROW(init_gain(0.0, 0.0018), DomainError);
    EXPECT_THROW(init_gain(0.1, -1.0), DomainError);
}

TEST(RateControl, GainsMonotoneOverGrid) {
    const LambdaGrid grid = LambdaGrid::standard();
    grid.validate();
    ASSERT_EQ(grid.size(), 11u);
    const auto gains = init_gains(grid);
    for (std::size_t i = 1; i < gains.size(); ++i) EXPECT_LT(gains[i - 1], gains[i]);
    EXPECT_EQ(gains[grid.index_of(grid.lambda_ref)], 1.0f);
}

TEST(RateControl, GridValidation) {
    LambdaGrid g{{0.001, 0.0018, 0.0015}, 0.0018};
    EXPECT_THROW(g.validate(), ConfigError);
    g = {{0.001, 0.002}, 0.0018};
    EXPECT_THROW(g.validate(), ConfigError);
    EXPECT_THROW(LambdaGrid::standard().index_of(0.5), LookupError);
}

TEST(RateControl, InterpolateGainGeometric) {
    const std::vector<float> gains{1.0f, 4.0f};
    EXPECT_NEAR(interpolate_gain(gains, 0.5), 2.0, 1e-12);
    EXPECT_EQ(interpolate_gain(gains, 1.0), 4.0);
    EXPECT_THROW(interpolate_gain(gains, 1.5), DomainError);
}

TEST(RateControl, ApplyRemoveGain) {
    Tensor y(1, 1, 2);
    y[0] = 1.0f;
    y[1] = -2.0f;
    const Tensor s = apply_gain(y, {2.0, true});
    EXPECT_EQ(s[0], 2.0f);
    EXPECT_EQ(s[1], -4.0f);
    EXPECT_EQ(apply_gain(y, {1.0, true}), y);

    Rng rng(7);
    Tensor r(4, 16, 16);
    for (float& v : r.values()) v = static_cast<float>(rng.normal() * 10.0);
    const GainParameter g{28.2843, true};
    const Tensor back = remove_gain(apply_gain(r, g), g);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_LE(std::fabs(back[i] - r[i]), 1e-5 * std::fabs(r[i]) + 1e-30);
}

TEST(RateControl, NoiseSupportMeanAndDeterminism) {
    Tensor y(1, 1000, 1000, 0.25f);
    const Tensor a = quantize_noise(y, 42);
    const Tensor b = quantize_noise(y, 42);
    EXPECT_EQ(a, b);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = static_cast<double>(a[i]) - y[i];
        ASSERT_GE(d, -0.5);
        ASSERT_LT(d, 0.5);
        sum += d;
    }
    EXPECT_NEAR(sum / static_cast<double>(y.size()), 0.0, 0.002);
}

TEST(RateControl, SteRoundsHalfAway) {
    Tensor y(1, 1, 8);
    const float in[8] = {1.4f, -1.5f, 0.5f, -0.5f, 1.5f, 2.5f, -2.5f, 0.3f};
    const float want[8] = {1.0f, -2.0f, 1.0f, -1.0f, 2.0f, 3.0f, -3.0f, 0.0f};
    for (int i = 0; i < 8; ++i) y[i] = in[i];
    const Tensor q = quantize_ste(y);
    for (int i = 0; i < 8; ++i) EXPECT_EQ(q[i], want[i]);
    Tensor ones(1, 1, 8, 1.0f);
    EXPECT_EQ(quantize_ste_backward(ones), ones);
}

TEST(RateControl, SteSurrogateGradientOfSquare) {
    // f(y) = sum(q(y)^2); the surrogate gradient is 2 * round(y) * 1.
    Tensor y(1, 1, 1, 0.3f);
    const Tensor q = quantize_ste(y);
    Tensor up(1, 1, 1, 2.0f * q[0]);
    EXPECT_EQ(quantize_ste_backward(up)[0], 0.0f);
}

TEST(RateControl, CenterQuantize) {
    Tensor y(1, 1, 1, 3.7f), mu(1, 1, 1, 3.2f);
    const auto cq = center_quantize(y, mu);
    EXPECT_EQ(cq.symbols[0], 1);
    EXPECT_NEAR(cq.y_hat[0], 4.2f, 1e-6);

    EXPECT_THROW(center_quantize(y, Tensor(1, 1, 2)), ContractError);

    Rng rng(3);
    Tensor yy(1, 1000, 1000), mm(1, 1000, 1000);
    for (std::size_t i = 0; i < yy.size(); ++i) {
        yy[i] = static_cast<float>(rng.normal() * 20.0);
        mm[i] = static_cast<float>(rng.normal() * 20.0);
    }
    const auto r = center_quantize(yy, mm);
    double worst = 0.0;
    for (std::size_t i = 0; i < yy.size(); ++i) worst = std::max(worst, std::fabs(double(r.y_hat[i]) - yy[i]));
    EXPECT_LE(worst, 0.5);
    const Tensor back = center_dequantize(r.symbols, mm);
    EXPECT_EQ(back, r.y_hat);
}

TEST(RateControl, CenterWithZeroMeanIsRounding) {
    Tensor y(1, 1, 4), mu(1, 1, 4);
    const float v[4] = {0.49f, -0.5f, 2.51f, -7.2f};
    for (int i = 0; i < 4; ++i) y[i] = v[i];
    const auto r = center_quantize(y, mu);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(r.symbols[i], static_cast<int>(std::round(v[i])));
}
