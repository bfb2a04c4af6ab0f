#include "rdcl/nn/layers.hpp"

#include <cmath>

#include "rdcl/nn/gemm.hpp"

namespace rdcl::nn {

namespace {

void init_uniform(Param& p, double bound, Rng& rng) {
    for (float& v : p.value) v = static_cast<float>(rng.uniform(-bound, bound));
}

constexpr float kGdnBetaMin = 1e-6f;

// Lower-bounded reparameterisation: the gradient still reaches a raw value
// stuck below the bound whenever descent would move it back up.
inline float bounded(float raw, float bound) { return raw < bound ? bound : raw; }
inline float bounded_grad(float raw, float bound, float g) { return (raw >= bound || g < 0.0f) ? g : 0.0f; }

}  // namespace

void im2col(const Tensor& x, const ConvGeometry& g, int out_h, int out_w, std::vector<float>& col) {
    const int c = x.channels(), h = x.height(), w = x.width(), k = g.kernel;
    const std::size_t positions = static_cast<std::size_t>(out_h) * out_w;
    col.assign(static_cast<std::size_t>(c) * k * k * positions, 0.0f);
    for (int ch = 0; ch < c; ++ch) {
        const float* src = x.channel(ch);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* dst = col.data() + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * positions;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    float* row = dst + static_cast<std::size_t>(oy) * out_w;
                    const float* srow = src + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < w) row[ox] = srow[ix];
                    }
                }
            }
        }
    }
}

void col2im(const std::vector<float>& col, const ConvGeometry& g, int out_h, int out_w, Tensor& img) {
    const int c = img.channels(), h = img.height(), w = img.width(), k = g.kernel;
    const std::size_t positions = static_cast<std::size_t>(out_h) * out_w;
    for (int ch = 0; ch < c; ++ch) {
        float* dst = img.channel(ch);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* src = col.data() + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * positions;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const float* row = src + static_cast<std::size_t>(oy) * out_w;
                    float* drow = dst + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < w) drow[ix] += row[ox];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      geom_{kernel, stride, pad},
      weight_(name + ".weight", {out_ch, in_ch * kernel * kernel}),
      bias_(name + ".bias", {out_ch}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * kernel * kernel));
    init_uniform(weight_, bound, rng);
    init_uniform(bias_, bound, rng);
}

void Conv2d::check_input(const Shape& in) const {
    if (in.c != in_ch_)
        throw ContractError(weight_.name + ": expected " + std::to_string(in_ch_) + " input channels, got " +
                            std::to_string(in.c));
}

Shape Conv2d::output_shape(const Shape& in) const {
    check_input(in);
    return {out_ch_, geom_.out_size(in.h), geom_.out_size(in.w)};
}

Tensor Conv2d::run(const Tensor& x, std::vector<float>* keep_col) const {
    const Shape os = output_shape(x.shape());
    const int positions = os.h * os.w;
    const int kdim = in_ch_ * geom_.kernel * geom_.kernel;
    Tensor out(os);
    const bool pointwise = geom_.kernel == 1 && geom_.stride == 1 && geom_.pad == 0;
    std::vector<float> local;
    std::vector<float>& col = keep_col ? *keep_col : local;
    const float* b;
    if (pointwise) {
        if (keep_col) col.assign(x.data(), x.data() + x.size());
        b = x.data();
    } else {
        im2col(x, geom_, os.h, os.w, col);
        b = col.data();
    }
    gemm_nn(out_ch_, positions, kdim, weight_.value.data(), kdim, b, positions, out.data(), positions);
    for (int o = 0; o < out_ch_; ++o) {
        float* row = out.channel(o);
        const float bias = bias_.value[o];
        for (int p = 0; p < positions; ++p) row[p] += bias;
    }
    return out;
}

Tensor Conv2d::forward(const Tensor& x) const { return run(x, nullptr); }

Tensor Conv2d::forward_train(const Tensor& x) {
    in_shape_ = x.shape();
    return run(x, &col_);
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const int positions = grad_out.height() * grad_out.width();
    const int kdim = in_ch_ * geom_.kernel * geom_.kernel;
    gemm_nt(out_ch_, kdim, positions, grad_out.data(), positions, col_.data(), positions, weight_.grad.data(), kdim);
    for (int o = 0; o < out_ch_; ++o) {
        const float* row = grad_out.channel(o);
        double s = 0.0;
        for (int p = 0; p < positions; ++p) s += row[p];
        bias_.grad[o] += static_cast<float>(s);
    }
    std::vector<float> dcol(static_cast<std::size_t>(kdim) * positions, 0.0f);
    gemm_tn(kdim, positions, out_ch_, weight_.value.data(), kdim, grad_out.data(), positions, dcol.data(), positions);
    Tensor dx(in_shape_);
    if (geom_.kernel == 1 && geom_.stride == 1 && geom_.pad == 0) {
        std::copy(dcol.begin(), dcol.end(), dx.data());
    } else {
        col2im(dcol, geom_, grad_out.height(), grad_out.width(), dx);
    }
    return dx;
}

std::optional<std::uint64_t> Conv2d::macs(const Shape& in) const {
    const Shape os = output_shape(in);
    return static_cast<std::uint64_t>(geom_.kernel) * geom_.kernel * in_ch_ * out_ch_ * os.h * os.w;
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
                                 int output_pad, Rng& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      geom_{kernel, stride, pad},
      output_pad_(output_pad),
      weight_(name + ".weight", {in_ch, out_ch * kernel * kernel}),
      bias_(name + ".bias", {out_ch}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(out_ch * kernel * kernel));
    init_uniform(weight_, bound, rng);
    init_uniform(bias_, bound, rng);
}

Shape ConvTranspose2d::output_shape(const Shape& in) const {
    if (in.c != in_ch_) throw ContractError(weight_.name + ": input channel mismatch");
    auto size = [&](int n) { return (n - 1) * geom_.stride - 2 * geom_.pad + geom_.kernel + output_pad_; };
    return {out_ch_, size(in.h), size(in.w)};
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
    const Shape os = output_shape(x.shape());
    const int positions = x.height() * x.width();
    const int kdim = out_ch_ * geom_.kernel * geom_.kernel;
    std::vector<float> col(static_cast<std::size_t>(kdim) * positions, 0.0f);
    gemm_tn(kdim, positions, in_ch_, weight_.value.data(), kdim, x.data(), positions, col.data(), positions);
    Tensor out(os);
    col2im(col, geom_, x.height(), x.width(), out);
    const std::size_t plane = os.plane();
    for (int o = 0; o < out_ch_; ++o) {
        float* row = out.channel(o);
        const float bias = bias_.value[o];
        for (std::size_t p = 0; p < plane; ++p) row[p] += bias;
    }
    return out;
}

Tensor ConvTranspose2d::forward_train(const Tensor& x) {
    input_ = x;
    return forward(x);
}

Tensor ConvTranspose2d::backward(const Tensor& grad_out) {
    const int positions = input_.height() * input_.width();
    const int kdim = out_ch_ * geom_.kernel * geom_.kernel;
    std::vector<float> dcol;
    im2col(grad_out, geom_, input_.height(), input_.width(), dcol);
    Tensor dx(input_.shape());
    gemm_nn(in_ch_, positions, kdim, weight_.value.data(), kdim, dcol.data(), positions, dx.data(), positions);
    gemm_nt(in_ch_, kdim, positions, input_.data(), positions, dcol.data(), positions, weight_.grad.data(), kdim);
    const std::size_t plane = grad_out.shape().plane();
    for (int o = 0; o < out_ch_; ++o) {
        const float* row = grad_out.channel(o);
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += row[p];
        bias_.grad[o] += static_cast<float>(s);
    }
    return dx;
}

std::optional<std::uint64_t> ConvTranspose2d::macs(const Shape& in) const {
    output_shape(in);
    return static_cast<std::uint64_t>(geom_.kernel) * geom_.kernel * in_ch_ * out_ch_ * in.h * in.w;
}

// ------------------------------------------------------------------- GDN

Gdn::Gdn(std::string name, int channels, bool inverse)
    : channels_(channels),
      inverse_(inverse),
      beta_(name + ".beta", {channels}, 1.0f),
      gamma_(name + ".gamma", {channels, channels}, 0.0f) {
    for (int c = 0; c < channels; ++c) gamma_.value[static_cast<std::size_t>(c) * channels + c] = 0.1f;
}

Tensor Gdn::run(const Tensor& x, Tensor* keep_norm) const {
    if (x.channels() != channels_) throw ContractError(beta_.name + ": channel mismatch");
    const int positions = x.height() * x.width();
    std::vector<float> gamma(gamma_.size());
    for (std::size_t i = 0; i < gamma.size(); ++i) gamma[i] = bounded(gamma_.value[i], 0.0f);
    Tensor sq = x;
    for (float& v : sq.values()) v = v * v;
    Tensor norm(x.shape());
    gemm_nn(channels_, positions, channels_, gamma.data(), channels_, sq.data(), positions, norm.data(), positions);
    Tensor out(x.shape());
    for (int c = 0; c < channels_; ++c) {
        const float beta = bounded(beta_.value[c], kGdnBetaMin);
        float* n = norm.channel(c);
        const float* xi = x.channel(c);
        float* o = out.channel(c);
        for (int p = 0; p < positions; ++p) {
            n[p] += beta;
            const float r = std::sqrt(n[p]);
            o[p] = inverse_ ? xi[p] * r : xi[p] / r;
        }
    }
    if (keep_norm) *keep_norm = std::move(norm);
    return out;
}

Tensor Gdn::forward(const Tensor& x) const { return run(x, nullptr); }

Tensor Gdn::forward_train(const Tensor& x) {
    input_ = x;
    return run(x, &norm_);
}

Tensor Gdn::backward(const Tensor& grad_out) {
    const int positions = input_.height() * input_.width();
    Tensor dx(input_.shape());
    Tensor dnorm(input_.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const float n = norm_[i], x = input_[i], g = grad_out[i];
        const float r = std::sqrt(n);
        if (inverse_) {
            dx[i] = g * r;
            dnorm[i] = g * x * 0.5f / r;
        } else {
            dx[i] = g / r;
            dnorm[i] = -0.5f * g * x / (n * r);
        }
    }
    Tensor sq = input_;
    for (float& v : sq.values()) v = v * v;
    std::vector<float> dgamma(gamma_.size(), 0.0f);
    gemm_nt(channels_, channels_, positions, dnorm.data(), positions, sq.data(), positions, dgamma.data(), channels_);
    for (std::size_t i = 0; i < dgamma.size(); ++i) gamma_.grad[i] += bounded_grad(gamma_.value[i], 0.0f, dgamma[i]);
    for (int c = 0; c < channels_; ++c) {
        const float* d = dnorm.channel(c);
        double s = 0.0;
        for (int p = 0; p < positions; ++p) s += d[p];
        beta_.grad[c] += bounded_grad(beta_.value[c], kGdnBetaMin, static_cast<float>(s));
    }
    std::vector<float> gamma(gamma_.size());
    for (std::size_t i = 0; i < gamma.size(); ++i) gamma[i] = bounded(gamma_.value[i], 0.0f);
    Tensor dsq(input_.shape());
    gemm_tn(channels_, positions, channels_, gamma.data(), channels_, dnorm.data(), positions, dsq.data(), positions);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0f * input_[i] * dsq[i];
    return dx;
}

std::optional<std::uint64_t> Gdn::macs(const Shape& in) const {
    return static_cast<std::uint64_t>(channels_) * channels_ * in.h * in.w;
}

// ------------------------------------------------------------------ ReLU

Tensor Relu::forward(const Tensor& x) const {
    Tensor out = x;
    for (float& v : out.values()) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor Relu::forward_train(const Tensor& x) {
    output_ = forward(x);
    return output_;
}

Tensor Relu::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(output_[i] > 0.0f)) dx[i] = 0.0f;
    return dx;
}

// ------------------------------------------------------ DepthwiseConv3x3

DepthwiseConv3x3::DepthwiseConv3x3(std::string name, int channels, Rng& rng)
    : channels_(channels), weight_(name + ".weight", {channels, 9}), bias_(name + ".bias", {channels}) {
    init_uniform(weight_, 1.0 / 3.0, rng);
    init_uniform(bias_, 1.0 / 3.0, rng);
}

Tensor DepthwiseConv3x3::forward(const Tensor& x) const {
    if (x.channels() != channels_) throw ContractError(weight_.name + ": channel mismatch");
    const int h = x.height(), w = x.width();
    Tensor out(x.shape());
    for (int c = 0; c < channels_; ++c) {
        const float* k = weight_.value.data() + c * 9;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                float acc = 0.0f;
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = y + ky - 1;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = xx + kx - 1;
                        if (ix >= 0 && ix < w) acc += k[ky * 3 + kx] * x.at(c, iy, ix);
                    }
                }
                out.at(c, y, xx) = acc + bias_.value[c];
            }
        }
    }
    return out;
}

Tensor DepthwiseConv3x3::forward_train(const Tensor& x) {
    input_ = x;
    return forward(x);
}

Tensor DepthwiseConv3x3::backward(const Tensor& grad_out) {
    const int h = input_.height(), w = input_.width();
    Tensor dx(input_.shape());
    for (int c = 0; c < channels_; ++c) {
        const float* k = weight_.value.data() + c * 9;
        float* gk = weight_.grad.data() + c * 9;
        double gb = 0.0;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                const float g = grad_out.at(c, y, xx);
                gb += g;
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = y + ky - 1;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = xx + kx - 1;
                        if (ix < 0 || ix >= w) continue;
                        gk[ky * 3 + kx] += g * input_.at(c, iy, ix);
                        dx.at(c, iy, ix) += g * k[ky * 3 + kx];
                    }
                }
            }
        }
        bias_.grad[c] += static_cast<float>(gb);
    }
    return dx;
}

std::optional<std::uint64_t> DepthwiseConv3x3::macs(const Shape& in) const {
    return static_cast<std::uint64_t>(9) * channels_ * in.h * in.w;
}

// ------------------------------------------------------------ SimpleGate

Tensor SimpleGate::forward(const Tensor& x) const {
    if (x.channels() % 2 != 0) throw ContractError("simple_gate: channel count must be even");
    const int half = x.channels() / 2;
    Tensor out(half, x.height(), x.width());
    const std::size_t n = out.size();
    const float* a = x.data();
    const float* b = x.data() + n;
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor SimpleGate::forward_train(const Tensor& x) {
    input_ = x;
    return forward(x);
}

Tensor SimpleGate::backward(const Tensor& grad_out) {
    Tensor dx(input_.shape());
    const std::size_t n = grad_out.size();
    for (std::size_t i = 0; i < n; ++i) {
        dx[i] = grad_out[i] * input_[n + i];
        dx[n + i] = grad_out[i] * input_[i];
    }
    return dx;
}

// ------------------------------------------------------ ChannelAttention

ChannelAttention::ChannelAttention(std::string name, int channels, Rng& rng)
    : channels_(channels), weight_(name + ".weight", {channels, channels}), bias_(name + ".bias", {channels}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
    init_uniform(weight_, bound, rng);
    for (float& b : bias_.value) b = 1.0f;
}

std::vector<float> ChannelAttention::scales(const Tensor& x, std::vector<float>* pooled_out) const {
    if (x.channels() != channels_) throw ContractError(weight_.name + ": channel mismatch");
    const std::size_t plane = x.shape().plane();
    std::vector<float> pooled(channels_);
    for (int c = 0; c < channels_; ++c) {
        const float* p = x.channel(c);
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
        pooled[c] = static_cast<float>(s / static_cast<double>(plane));
    }
    std::vector<float> scale(channels_);
    for (int o = 0; o < channels_; ++o) {
        float acc = 0.0f;
        for (int i = 0; i < channels_; ++i) acc += weight_.value[static_cast<std::size_t>(o) * channels_ + i] * pooled[i];
        scale[o] = acc + bias_.value[o];
    }
    if (pooled_out) *pooled_out = std::move(pooled);
    return scale;
}

Tensor ChannelAttention::forward(const Tensor& x) const {
    const std::vector<float> s = scales(x, nullptr);
    Tensor out = x;
    const std::size_t plane = x.shape().plane();
    for (int c = 0; c < channels_; ++c) {
        float* p = out.channel(c);
        for (std::size_t i = 0; i < plane; ++i) p[i] *= s[c];
    }
    return out;
}

Tensor ChannelAttention::forward_train(const Tensor& x) {
    input_ = x;
    scale_ = scales(x, &pooled_);
    Tensor out = x;
    const std::size_t plane = x.shape().plane();
    for (int c = 0; c < channels_; ++c) {
        float* p = out.channel(c);
        for (std::size_t i = 0; i < plane; ++i) p[i] *= scale_[c];
    }
    return out;
}

Tensor ChannelAttention::backward(const Tensor& grad_out) {
    const std::size_t plane = input_.shape().plane();
    std::vector<float> dscale(channels_);
    Tensor dx(input_.shape());
    for (int c = 0; c < channels_; ++c) {
        const float* g = grad_out.channel(c);
        const float* x = input_.channel(c);
        float* d = dx.channel(c);
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            s += static_cast<double>(g[i]) * x[i];
            d[i] = g[i] * scale_[c];
        }
        dscale[c] = static_cast<float>(s);
    }
    std::vector<float> dpooled(channels_, 0.0f);
    for (int o = 0; o < channels_; ++o) {
        bias_.grad[o] += dscale[o];
        for (int i = 0; i < channels_; ++i) {
            weight_.grad[static_cast<std::size_t>(o) * channels_ + i] += dscale[o] * pooled_[i];
            dpooled[i] += weight_.value[static_cast<std::size_t>(o) * channels_ + i] * dscale[o];
        }
    }
    const float inv = 1.0f / static_cast<float>(plane);
    for (int c = 0; c < channels_; ++c) {
        float* d = dx.channel(c);
        const float add = dpooled[c] * inv;
        for (std::size_t i = 0; i < plane; ++i) d[i] += add;
    }
    return dx;
}

std::optional<std::uint64_t> ChannelAttention::macs(const Shape&) const {
    return static_cast<std::uint64_t>(channels_) * channels_;
}

// ------------------------------------------------------------ Sequential

Shape Sequential::output_shape(const Shape& in) const {
    Shape s = in;
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
}

Tensor Sequential::forward(const Tensor& x) const {
    Tensor t = x;
    for (const auto& l : layers_) t = l->forward(t);
    return t;
}

Tensor Sequential::forward_train(const Tensor& x) {
    Tensor t = x;
    for (auto& l : layers_) t = l->forward_train(t);
    return t;
}

Tensor Sequential::backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

void Sequential::collect(ParamList& out) {
    for (auto& l : layers_) l->collect(out);
}

void Sequential::collect(std::vector<const Param*>& out) const {
    for (const auto& l : layers_) l->collect(out);
}

std::uint64_t Sequential::count_macs(const Shape& in, std::vector<std::string>& uncounted) const {
    std::uint64_t total = 0;
    Shape s = in;
    for (const auto& l : layers_) {
        if (const auto* seq = dynamic_cast<const Sequential*>(l.get())) {
            total += seq->count_macs(s, uncounted);
        } else if (auto m = l->macs(s)) {
            total += *m;
        } else {
            uncounted.push_back(l->kind());
        }
        s = l->output_shape(s);
    }
    return total;
}

std::optional<std::uint64_t> Sequential::macs(const Shape& in) const {
    std::vector<std::string> uncounted;
    const std::uint64_t m = count_macs(in, uncounted);
    if (!uncounted.empty()) return std::nullopt;
    return m;
}

// ------------------------------------------------------------ GatedBlock

GatedBlock::GatedBlock(std::string name, int channels, Rng& rng) {
    body_.add<Conv2d>(name + ".expand", channels, 2 * channels, 1, 1, 0, rng);
    body_.add<DepthwiseConv3x3>(name + ".dw", 2 * channels, rng);
    body_.add<SimpleGate>();
    body_.add<ChannelAttention>(name + ".ca", channels, rng);
    auto& proj = body_.add<Conv2d>(name + ".project", channels, channels, 1, 1, 0, rng);
    // Start close to identity so deep stacks train from the first step.
    for (float& v : proj.weight().value) v *= 0.1f;
}

Tensor GatedBlock::forward(const Tensor& x) const {
    Tensor out = body_.forward(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
    return out;
}

Tensor GatedBlock::forward_train(const Tensor& x) {
    Tensor out = body_.forward_train(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
    return out;
}

Tensor GatedBlock::backward(const Tensor& grad_out) {
    Tensor g = body_.backward(grad_out);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_out[i];
    return g;
}

// ---------------------------------------------------------------- utils

void zero_grad(const ParamList& params) {
    for (Param* p : params) p->zero_grad();
}

double clip_grad_norm(const ParamList& params, double max_norm) {
    double sq = 0.0;
    for (const Param* p : params)
        for (float g : p->grad) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const auto scale = static_cast<float>(max_norm / norm);
        for (Param* p : params)
            for (float& g : p->grad) g *= scale;
    }
    return norm;
}

}  // namespace rdcl::nn
