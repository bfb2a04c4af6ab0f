#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "rdcl/nn/gemm.hpp"
#include "rdcl/nn/layers.hpp"
#include "rdcl/nn/optim.hpp"

using namespace rdcl;
using namespace rdcl::nn;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor t(s);
    for (float& v : t.values()) v = static_cast<float>(rng.normal() * scale);
    return t;
}

double weighted_sum(const Tensor& out, const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += static_cast<double>(out[i]) * w[i];
    return s;
}

// Checks backward() of `layer` against central differences of
// sum(forward(x) * w) on a handful of input and parameter entries.
void check_gradients(Layer& layer, const Tensor& x, double tol = 2e-2) {
    Rng rng(99);
    const Tensor w = random_tensor(layer.output_shape(x.shape()), rng);
    ParamList params;
    layer.collect(params);
    zero_grad(params);
    layer.forward_train(x);
    const Tensor dx = layer.backward(w);

    const float h = 1e-2f;
    auto probe = [&](float& slot, double analytic) {
        const float saved = slot;
        slot = saved + h;
        const double up = weighted_sum(layer.forward(x), w);
        slot = saved - h;
        const double dn = weighted_sum(layer.forward(x), w);
        slot = saved;
        const double fd = (up - dn) / (2.0 * h);
        EXPECT_NEAR(analytic, fd, tol * (1.0 + std::fabs(fd)));
    };
    Tensor xm = x;
    for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 13)) {
        const float saved = xm[i];
        xm[i] = saved + h;
        const double up = weighted_sum(layer.forward(xm), w);
        xm[i] = saved - h;
        const double dn = weighted_sum(layer.forward(xm), w);
        xm[i] = saved;
        const double fd = (up - dn) / (2.0 * h);
        EXPECT_NEAR(dx[i], fd, tol * (1.0 + std::fabs(fd))) << "input " << i;
    }
    for (Param* p : params)
        for (std::size_t i = 0; i < p->size(); i += std::max<std::size_t>(1, p->size() / 7)) probe(p->value[i], p->grad[i]);
}

}  // namespace

TEST(Gemm, MatchesNaiveOrder) {
    Rng rng(1);
    const int m = 13, n = 700, k = 37;
    std::vector<float> a(m * k), at(k * m), b(k * n), c(m * n, 0.5f), ct(m * n, 0.5f);
    for (auto& v : a) v = static_cast<float>(rng.normal());
    for (auto& v : b) v = static_cast<float>(rng.normal());
    for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) at[kk * m + i] = a[i * k + kk];
    gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n);
    gemm_tn(m, n, k, at.data(), m, b.data(), n, ct.data(), n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            float acc = 0.5f;
            for (int kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
            ASSERT_EQ(c[i * n + j], acc);
            ASSERT_EQ(ct[i * n + j], acc);
        }
}

TEST(Layers, ConvShapesAndMacs) {
    Rng rng(0);
    Conv2d c("c", 3, 8, 3, 1, 1, rng);
    EXPECT_EQ(c.output_shape({3, 16, 16}), (Shape{8, 16, 16}));
    ParamList p;
    c.collect(p);
    EXPECT_EQ(count_scalars(p), 224u);
    EXPECT_EQ(*c.macs({3, 16, 16}) / 256, 216u);
    Conv2d s("s", 8, 16, 3, 2, 1, rng);
    EXPECT_EQ(*s.macs({8, 16, 16}) / 256, 288u);
    EXPECT_THROW(c.output_shape({4, 16, 16}), ContractError);
}

TEST(Layers, ConvGradients) {
    Rng rng(1);
    Conv2d c("c", 3, 4, 5, 2, 2, rng);
    check_gradients(c, random_tensor({3, 9, 8}, rng));
    Conv2d p("p", 4, 3, 1, 1, 0, rng);
    check_gradients(p, random_tensor({4, 5, 6}, rng));
}

TEST(Layers, ConvTransposeShapeAndGradients) {
    Rng rng(2);
    ConvTranspose2d d("d", 4, 3, 5, 2, 2, 1, rng);
    EXPECT_EQ(d.output_shape({4, 4, 5}), (Shape{3, 8, 10}));
    check_gradients(d, random_tensor({4, 4, 5}, rng));
    ConvTranspose2d k2("k2", 3, 2, 2, 2, 0, 0, rng);
    EXPECT_EQ(k2.output_shape({3, 4, 4}), (Shape{2, 8, 8}));
    check_gradients(k2, random_tensor({3, 4, 4}, rng));
}

TEST(Layers, GdnGradients) {
    Rng rng(3);
    for (bool inverse : {false, true}) {
        Gdn g("g", 4, inverse);
        ParamList p;
        g.collect(p);
        for (float& v : p[1]->value) v += static_cast<float>(0.05 + std::fabs(rng.normal()) * 0.05);
        check_gradients(g, random_tensor({4, 5, 5}, rng));
    }
}

TEST(Layers, ElementwiseAndAttentionGradients) {
    Rng rng(4);
    Relu r;
    check_gradients(r, random_tensor({2, 4, 4}, rng));
    DepthwiseConv3x3 dw("dw", 3, rng);
    check_gradients(dw, random_tensor({3, 5, 4}, rng));
    SimpleGate sg;
    check_gradients(sg, random_tensor({4, 3, 3}, rng));
    ChannelAttention ca("ca", 3, rng);
    check_gradients(ca, random_tensor({3, 4, 4}, rng));
    GatedBlock gb("gb", 4, rng);
    check_gradients(gb, random_tensor({4, 6, 6}, rng));
}

TEST(Layers, SequentialMacsAndUncounted) {
    Rng rng(5);
    Sequential s;
    s.add<Conv2d>("a", 3, 8, 3, 1, 1, rng);
    s.add<Relu>();
    s.add<ChannelAttention>("ca", 8, rng);
    std::vector<std::string> uncounted;
    EXPECT_EQ(s.count_macs({3, 4, 4}, uncounted), 216u * 16 + 64);
    EXPECT_TRUE(uncounted.empty());
    Sequential empty;
    EXPECT_EQ(empty.count_macs({3, 4, 4}, uncounted), 0u);
}

TEST(Optim, AdamStepAndPlateau) {
    Param p("p", {1}, 1.0f);
    Adam opt({&p}, {0.1});
    p.grad[0] = 3.0f;
    opt.step();
    EXPECT_NEAR(p.value[0], 0.9f, 1e-6);

    PlateauScheduler sched(10, 0.5, 1e-4);
    sched.observe(1.0, opt);
    for (int i = 0; i < 10; ++i) EXPECT_FALSE(sched.observe(1.0, opt));
    EXPECT_TRUE(sched.observe(1.0, opt));
    EXPECT_NEAR(opt.lr(), 0.05, 1e-15);
}

TEST(Optim, ClipGradNorm) {
    Param a("a", {2}), b("b", {1});
    a.grad = {3.0f, 0.0f};
    b.grad = {4.0f};
    EXPECT_NEAR(clip_grad_norm({&a, &b}, 1.0), 5.0, 1e-12);
    EXPECT_NEAR(a.grad[0], 0.6f, 1e-6);
    EXPECT_NEAR(b.grad[0], 0.8f, 1e-6);
}
