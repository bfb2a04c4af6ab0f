#include <gtest/gtest.h>

#include <cmath>

#include "rdcl/evaluation.hpp"
#include "rdcl/model.hpp"

using namespace rdcl;

namespace {

eval::RDCurve make_curve(std::vector<double> bpp, std::vector<double> psnr) {
    eval::RDCurve c;
    for (std::size_t i = 0; i < bpp.size(); ++i) c.points.push_back({bpp[i], psnr[i], static_cast<double>(i + 1)});
    return c;
}

const eval::RDCurve kAnchor = make_curve({0.25, 0.5, 1.0, 2.0, 4.0}, {28.0, 31.5, 34.0, 37.2, 40.0});

eval::RDCurve scaled(const eval::RDCurve& c, double f) {
    auto out = c;
    for (auto& p : out.points) p.bpp *= f;
    return out;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.transform_config.M = 16;
    c.transform_config.N = 8;
    c.transform_config.width = 8;
    c.transform_config.seed = 21;
    c.context_hidden = 8;
    return c;
}

}  // namespace

TEST(Metrics, PsnrAndBpp) {
    Tensor a(3, 8, 8, 0.25f);
    EXPECT_DOUBLE_EQ(eval::psnr(a, a), eval::kPsnrCap);
    Tensor b = a;
    for (auto& v : b.values()) v += 1.0f / 255.0f;
    // 20 log10(255)
    EXPECT_NEAR(eval::psnr(a, b), 48.1308036087, 1e-4);
    EXPECT_NEAR(eval::psnr_from_mse(1e-3), 30.0, 1e-12);
    EXPECT_DOUBLE_EQ(eval::bpp(49152, 512, 768), 1.0);
    EXPECT_THROW(eval::mse(a, Tensor(3, 8, 9)), ContractError);
}

TEST(BdRate, IdenticalCurvesGiveZero) {
    EXPECT_NEAR(eval::bd_rate(kAnchor, kAnchor), 0.0, 1e-12);
}

TEST(BdRate, UniformRateScalingIsRecovered) {
    EXPECT_NEAR(eval::bd_rate(kAnchor, scaled(kAnchor, 1.1)), 10.0, 1e-3);
    EXPECT_NEAR(eval::bd_rate(kAnchor, scaled(kAnchor, 0.9)), -10.0, 1e-3);
}

TEST(BdRate, IndependentOfPointOrder) {
    auto shuffled = scaled(kAnchor, 1.1);
    std::swap(shuffled.points[0], shuffled.points[3]);
    std::swap(shuffled.points[1], shuffled.points[4]);
    EXPECT_NEAR(eval::bd_rate(kAnchor, shuffled), eval::bd_rate(kAnchor, scaled(kAnchor, 1.1)), 1e-12);
}

TEST(BdRate, RejectsTooFewPointsAndDisjointCurves) {
    const auto three = make_curve({0.5, 1, 2}, {30, 33, 36});
    EXPECT_THROW(eval::bd_rate(kAnchor, three), ContractError);
    const auto high = make_curve({1, 2, 4, 8}, {50, 52, 54, 56});
    EXPECT_THROW(eval::bd_rate(kAnchor, high), DomainError);
}

TEST(BdRate, PartialOverlapUsesSharedInterval) {
    // log10(bpp) linear in PSNR, so the interpolants are exact on any range.
    auto line = [](std::vector<double> psnr, double f) {
        std::vector<double> bpp;
        for (double q : psnr) bpp.push_back(f * std::pow(10.0, 0.1 * q - 3.0));
        return make_curve(bpp, psnr);
    };
    const auto anchor = line({28, 30, 33, 36, 38}, 1.0);
    const auto test = line({34, 37, 39, 41, 45}, 1.1);
    EXPECT_NEAR(eval::bd_rate(anchor, test), 10.0, 1e-9);
}

TEST(Pchip, InterpolatesAndStaysMonotone) {
    const std::vector<double> x{0, 1, 2, 4, 5}, y{0, 0.1, 2, 2.1, 5};
    const eval::Pchip p(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(p(x[i]), y[i]);
    double prev = p(0);
    for (int i = 1; i <= 500; ++i) {
        const double v = p(i * 0.01);
        EXPECT_GE(v, prev - 1e-12);
        prev = v;
    }
}

TEST(Pchip, IntegratesLinearDataExactly) {
    const eval::Pchip p({1, 2, 3, 5}, {3, 5, 7, 11});
    // integral of 2t + 1 over [1.5, 4.5]
    EXPECT_NEAR(p.integrate(1.5, 4.5), 4.5 * 4.5 + 4.5 - (1.5 * 1.5 + 1.5), 1e-12);
    EXPECT_NEAR(p(2.5), 6.0, 1e-12);
    EXPECT_THROW(eval::Pchip({0, 0}, {1, 2}), DomainError);
    EXPECT_THROW(eval::Pchip({0}, {1}), ContractError);
}

TEST(RdCurve, InversionCounts) {
    auto c = make_curve({0.1, 0.3, 0.2, 0.5}, {30, 32, 33, 35});
    EXPECT_EQ(c.bpp_inversions(), 1);
    EXPECT_EQ(c.psnr_inversions(), 1);
    EXPECT_EQ(kAnchor.bpp_inversions(), 0);
    EXPECT_EQ(kAnchor.psnr_inversions(), 0);
}

TEST(RdCurve, JsonRoundTrip) {
    auto c = kAnchor;
    c.label = "anchor";
    const auto back = eval::curve_from_json(eval::to_json(c));
    EXPECT_EQ(back.label, "anchor");
    ASSERT_EQ(back.points.size(), c.points.size());
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        EXPECT_EQ(back.points[i].bpp, c.points[i].bpp);
        EXPECT_EQ(back.points[i].psnr, c.points[i].psnr);
    }
    const auto bare = eval::curve_from_json(nlohmann::json::parse(R"([{"bpp":1,"psnr":30}])"));
    EXPECT_EQ(bare.points.size(), 1u);
    EXPECT_THROW(eval::curve_from_json(nlohmann::json::parse(R"({"points":[{"bpp":1}]})")), DataError);
    EXPECT_THROW(eval::curve_from_json(nlohmann::json(3)), DataError);
}

TEST(RdCurve, OnePointPerGainAndDuplicatesDoNotChangeAverage) {
    const CompressionModel m(tiny_config());
    const std::vector<double> gains{0.5, 1.0, 2.0, 4.0};
    const Tensor gray(3, 64, 64, 0.5f);
    const auto one = eval::rd_curve(m, std::vector<Tensor>{gray}, gains);
    const auto three = eval::rd_curve(m, std::vector<Tensor>{gray, gray, gray}, gains, 2);
    ASSERT_EQ(one.average.points.size(), gains.size());
    ASSERT_EQ(three.average.points.size(), gains.size());
    EXPECT_EQ(three.per_image.size(), 3u);
    for (std::size_t i = 0; i < gains.size(); ++i) {
        EXPECT_EQ(one.average.points[i].gain, gains[i]);
        EXPECT_NEAR(three.average.points[i].bpp, one.average.points[i].bpp, 1e-12);
        EXPECT_NEAR(three.average.points[i].psnr, one.average.points[i].psnr, 1e-9);
    }
}

TEST(Complexity, CountsForSmallNetworks) {
    Rng rng(3);
    nn::Sequential net;
    net.add<nn::Conv2d>("c", 3, 8, 3, 1, 1, rng);
    EXPECT_EQ(eval::count_params(net), 224u);
    std::vector<std::string> unc;
    EXPECT_EQ(eval::macs_per_pixel(net, {3, 32, 32}, unc), 216u);
    net.add<nn::ChannelAttention>("ca", 8, rng);
    const auto b = eval::macs_breakdown(net, {3, 32, 32}, unc);
    EXPECT_EQ(b.per_pixel, 216u);
    EXPECT_EQ(b.fixed, 64u);
    EXPECT_EQ(b.total, 216u * 1024 + 64);
    EXPECT_EQ(eval::macs_per_pixel(net, {3, 64, 64}, unc), 216u);
    nn::Sequential empty;
    EXPECT_EQ(eval::count_params(empty), 0u);
    EXPECT_EQ(eval::macs_per_pixel(empty, {3, 32, 32}, unc), 0u);
}

TEST(Complexity, LatencySamplesAndReport) {
    const CompressionModel m(tiny_config());
    const std::vector<Tensor> imgs{Tensor(3, 64, 64, 0.3f), Tensor(3, 64, 64, 0.6f)};
    const auto lat = eval::latency_benchmark(m, imgs, 2, 1.0, 0);
    EXPECT_EQ(lat.samples, 4u);
    EXPECT_GT(lat.enc_seconds, 0.0);
    EXPECT_GT(lat.dec_seconds, 0.0);
    eval::ComplexityReport r;
    r.params_total = 7;
    const auto j = eval::to_json(r);
    EXPECT_EQ(j.at("params_total"), 7);
}

TEST(Plot, SvgHasOnePolylinePerCurve) {
    const std::string svg = eval::rd_svg({kAnchor, scaled(kAnchor, 1.2)}, "t");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    std::size_t n = 0;
    for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++n;
    EXPECT_EQ(n, 2u);
}
