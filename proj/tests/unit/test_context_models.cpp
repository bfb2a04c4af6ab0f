#include <gtest/gtest.h>

#include <cmath>

#include "rdcl/context_models.hpp"
#include "rdcl/entropy/gaussian.hpp"
#include "rdcl/rate_control.hpp"

using namespace rdcl;
using namespace rdcl::context;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor t(s);
    for (float& v : t.values()) v = static_cast<float>(rng.normal() * scale);
    return t;
}

ContextModel make_model(ContextKind kind, int M, int hidden = 8, std::uint64_t seed = 1) {
    ContextConfig c;
    c.kind = kind;
    c.M = M;
    c.hidden = hidden;
    c.seed = seed;
    return ContextModel(c);
}

int model_width(ContextKind kind) { return kind == ContextKind::scctx ? 80 : 20; }

}  // namespace

TEST(Checkerboard, MasksFollowParity) {
    const auto m2 = checkerboard_masks(2, 2);
    EXPECT_EQ(m2.anchor.at(0, 0, 0), 1.0f);
    EXPECT_EQ(m2.anchor.at(0, 1, 1), 1.0f);
    EXPECT_EQ(m2.non_anchor.at(0, 0, 1), 1.0f);
    EXPECT_EQ(m2.non_anchor.at(0, 1, 0), 1.0f);
    const auto m4 = checkerboard_masks(4, 4);
    double a = 0, n = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        a += m4.anchor[i];
        n += m4.non_anchor[i];
    }
    EXPECT_EQ(a, 8);
    EXPECT_EQ(n, 8);
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const int h = 1 + static_cast<int>(rng.below(9)), w = 1 + static_cast<int>(rng.below(9));
        const auto m = checkerboard_masks(h, w);
        for (std::size_t i = 0; i < m.anchor.size(); ++i) EXPECT_EQ(m.anchor[i] + m.non_anchor[i], 1.0f);
    }
    EXPECT_THROW(checkerboard_masks(0, 3), ContractError);
}

TEST(Groups, CharmAndScctx) {
    EXPECT_EQ(charm_groups(320, 10), std::vector<int>(10, 32));
    EXPECT_EQ(scctx_groups(320), (std::vector<int>{16, 16, 32, 64, 192}));
    EXPECT_EQ(scctx_groups(192), (std::vector<int>{8, 8, 16, 32, 128}));
    const auto uneven = charm_groups(96, 10);
    EXPECT_EQ(uneven, (std::vector<int>{10, 10, 10, 10, 10, 10, 9, 9, 9, 9}));
    for (int M : {10, 37, 96, 192, 320}) {
        int s = 0;
        for (int g : charm_groups(M)) s += g;
        EXPECT_EQ(s, M);
    }
    for (int M : {80, 96, 192, 320, 500}) {
        int s = 0;
        for (int g : scctx_groups(M)) s += g;
        EXPECT_EQ(s, M);
    }
    EXPECT_THROW(charm_groups(9), ConfigError);
    EXPECT_THROW(scctx_groups(48), ConfigError);
}

TEST(Schedule, UnitCounts) {
    EXPECT_EQ(make_schedule(ContextKind::hyperprior, 192).units.size(), 1u);
    EXPECT_EQ(make_schedule(ContextKind::checkerboard, 192).units.size(), 2u);
    EXPECT_EQ(make_schedule(ContextKind::charm, 192).units.size(), 10u);
    EXPECT_EQ(make_schedule(ContextKind::scctx, 192).units.size(), 10u);
    CodingSchedule bad = make_schedule(ContextKind::scctx, 192);
    std::swap(bad.units[0], bad.units[1]);
    EXPECT_THROW(bad.validate(192), ContractError);
}

TEST(ContextModel, ParameterMatchingAndNames) {
    EXPECT_EQ(parse_context_kind("scctx"), ContextKind::scctx);
    EXPECT_THROW(parse_context_kind("qarv"), ConfigError);
    const auto charm = make_model(ContextKind::charm, 96, 32);
    const auto scctx = make_model(ContextKind::scctx, 96, 32);
    EXPECT_EQ(charm.parameter_count(), context_param_count(ContextKind::charm, 96, 32, 3));
    EXPECT_EQ(scctx.parameter_count(), context_param_count(ContextKind::scctx, 96, scctx.hidden(), 3));
    const double gap = std::fabs(double(scctx.parameter_count()) - double(charm.parameter_count()));
    EXPECT_LT(gap / charm.parameter_count(), 0.02);
    EXPECT_EQ(make_model(ContextKind::hyperprior, 8).parameter_count(), 0u);
}

TEST(ContextModel, HyperpriorIgnoresDecodedLatent) {
    Rng rng(5);
    const auto m = make_model(ContextKind::hyperprior, 6);
    const Tensor f = random_tensor({12, 4, 4}, rng);
    const auto a = m.predict_unit(0, f, random_tensor({6, 4, 4}, rng));
    const auto b = m.predict_unit(0, f, random_tensor({6, 4, 4}, rng));
    EXPECT_EQ(a.mu, b.mu);
    EXPECT_EQ(a.sigma, b.sigma);
    for (float s : a.sigma.values()) EXPECT_GE(s, static_cast<float>(entropy::kSigmaMin));
}

TEST(ContextModel, CausalUnderLaterPerturbation) {
    Rng rng(6);
    for (ContextKind kind : {ContextKind::checkerboard, ContextKind::charm, ContextKind::scctx}) {
        const int M = model_width(kind);
        const auto m = make_model(kind, M);
        const auto& units = m.schedule().units;
        const Tensor f = random_tensor({2 * M, 4, 6}, rng);
        const Tensor y = random_tensor({M, 4, 6}, rng, 3.0);
        for (std::size_t u = 0; u < units.size(); ++u) {
            const UnitParams base = m.predict_unit(u, f, y);
            Tensor z = y;
            // Perturb every element that belongs to this or a later unit.
            for (std::size_t v = u; v < units.size(); ++v)
                for (int c = units[v].c_begin; c < units[v].c_end; ++c)
                    for (int yy = 0; yy < 4; ++yy)
                        for (int xx = 0; xx < 6; ++xx)
                            if (in_pass(units[v].pass, yy, xx)) z.at(c, yy, xx) += static_cast<float>(rng.normal() * 5);
            const UnitParams again = m.predict_unit(u, f, z);
            EXPECT_EQ(base.mu, again.mu) << to_string(kind) << " unit " << u;
            EXPECT_EQ(base.sigma, again.sigma) << to_string(kind) << " unit " << u;
        }
    }
}

TEST(ContextModel, EncodeDecodeRoundtrip) {
    Rng rng(7);
    for (ContextKind kind : {ContextKind::hyperprior, ContextKind::checkerboard, ContextKind::charm, ContextKind::scctx}) {
        const int M = model_width(kind);
        const auto m = make_model(kind, M);
        const Tensor f = random_tensor({2 * M, 4, 4}, rng);
        const Tensor y = random_tensor({M, 4, 4}, rng, 4.0);
        const auto coded = encode_latent(m, y, f, 2.0);
        EXPECT_EQ(coded.segments.size(), m.schedule().units.size());
        const Tensor back = decode_latent(m, coded.segments, f, 2.0);
        EXPECT_EQ(back, coded.y_hat) << to_string(kind);
        for (std::size_t i = 0; i < y.size(); ++i) EXPECT_LE(std::fabs(coded.y_hat[i] - y[i]), 0.25f + 1e-5f);

        std::vector<std::vector<std::uint8_t>> short_list(coded.segments.begin(), coded.segments.end() - 1);
        try {
            decode_latent(m, short_list, f, 2.0);
            ADD_FAILURE() << "expected a truncation error";
        } catch (const DecodeError& e) {
            EXPECT_EQ(e.kind(), DecodeError::Kind::Truncated);
            EXPECT_NE(std::string(e.what()).find("unit " + std::to_string(short_list.size())), std::string::npos);
        }
    }
}

TEST(ContextModel, SerialReferenceMatchesBatched) {
    Rng rng(8);
    for (ContextKind kind : {ContextKind::hyperprior, ContextKind::checkerboard, ContextKind::charm}) {
        const int M = model_width(kind);
        const auto m = make_model(kind, M);
        const Tensor f = random_tensor({2 * M, 5, 4}, rng);
        const Tensor y = random_tensor({M, 5, 4}, rng, 3.0);
        const auto coded = encode_scaled(m, y, f);
        EXPECT_EQ(serial_reference_decode(m, coded.segments, f), decode_scaled(m, coded.segments, f));
    }
}

TEST(ContextModel, TrainingGradientsMatchFiniteDifferences) {
    Rng rng(9);
    for (ContextKind kind : {ContextKind::hyperprior, ContextKind::checkerboard, ContextKind::charm, ContextKind::scctx}) {
        const int M = model_width(kind);
        auto m = make_model(kind, M, 6);
        const Tensor f = random_tensor({2 * M, 4, 4}, rng);
        const Tensor y = random_tensor({M, 4, 4}, rng);
        const Tensor wm = random_tensor({M, 4, 4}, rng), ws = random_tensor({M, 4, 4}, rng);
        auto loss = [&](const Tensor& ff, const Tensor& yy) {
            const auto p = m.forward_train(ff, yy, [](float v, float, std::size_t) { return v; }).params;
            double s = 0;
            for (std::size_t i = 0; i < p.mu.size(); ++i) s += double(p.mu[i]) * wm[i] + double(p.sigma[i]) * ws[i];
            return s;
        };
        nn::ParamList params;
        m.collect(params);
        nn::zero_grad(params);
        loss(f, y);
        Tensor df(f.shape()), dy(y.shape());
        m.backward(wm, ws, df, dy);
        const float h = 1e-2f;
        for (int probe = 0; probe < 12; ++probe) {
            const std::size_t i = rng.below(y.size());
            Tensor yp = y, ym = y;
            yp[i] += h;
            ym[i] -= h;
            const double fd = (loss(f, yp) - loss(f, ym)) / (2 * h);
            EXPECT_NEAR(dy[i], fd, 2e-2 * (1 + std::fabs(fd))) << to_string(kind);
            const std::size_t j = rng.below(f.size());
            Tensor fp = f, fm = f;
            fp[j] += h;
            fm[j] -= h;
            const double fdf = (loss(fp, y) - loss(fm, y)) / (2 * h);
            EXPECT_NEAR(df[j], fdf, 2e-2 * (1 + std::fabs(fdf))) << to_string(kind);
        }
    }
}

TEST(ContextModel, TrainingQuantizerSeesCausalMeans) {
    Rng rng(10);
    for (ContextKind kind : {ContextKind::checkerboard, ContextKind::charm}) {
        const int M = model_width(kind);
        auto m = make_model(kind, M);
        const Tensor f = random_tensor({2 * M, 4, 4}, rng);
        const Tensor y = random_tensor({M, 4, 4}, rng, 3.0);
        // Rounding around the predicted mean reproduces the coder's y_hat.
        const auto tf = m.forward_train(f, y, [](float v, float mu, std::size_t) {
            return rate::dequantize_one(rate::center_symbol(v, mu), mu);
        });
        const auto coded = encode_scaled(m, y, f);
        EXPECT_EQ(tf.y_hat, coded.y_hat) << to_string(kind);
        EXPECT_EQ(tf.params.mu, coded.params.mu) << to_string(kind);
    }
}

TEST(ContextModel, ModelIdLayout) {
    const std::uint8_t a = model_id(ContextKind::scctx, "baseline_conv");
    EXPECT_EQ(a >> 4, 3);
    EXPECT_EQ(model_id(ContextKind::hyperprior, "baseline_conv") & 0xF, a & 0xF);
}
