#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rdcl/core/rng.hpp"
#include "rdcl/core/tensor.hpp"
#include "rdcl/nn/param.hpp"

namespace rdcl::nn {

/// A differentiable operation on one [C,H,W] tensor.
///
/// forward() is const and keeps no state, so eval-mode use is safe from
/// several threads. forward_train() records what backward() needs; each
/// layer instance supports one pending training pass at a time.
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual Tensor forward(const Tensor& x) const = 0;
    virtual Tensor forward_train(const Tensor& x) = 0;
    /// Accumulates parameter gradients and returns d loss / d input.
    virtual Tensor backward(const Tensor& grad_out) = 0;

    virtual void collect(ParamList&) {}
    virtual void collect(std::vector<const Param*>&) const {}

    /// Multiply-accumulates for one forward pass at input shape `in`;
    /// nullopt when the layer kind has no counting rule.
    virtual std::optional<std::uint64_t> macs(const Shape&) const { return std::nullopt; }
};

struct ConvGeometry {
    int kernel = 3;
    int stride = 1;
    int pad = 1;

    int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

/// im2col for the given geometry: rows (c, ky, kx), columns output positions.
void im2col(const Tensor& x, const ConvGeometry& g, int out_h, int out_w, std::vector<float>& col);
/// Adjoint of im2col, accumulating into `img`.
void col2im(const std::vector<float>& col, const ConvGeometry& g, int out_h, int out_w, Tensor& img);

class Conv2d : public Layer {
public:
    Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);

    std::string kind() const override { return "conv2d"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(ParamList& out) override { out.insert(out.end(), {&weight_, &bias_}); }
    void collect(std::vector<const Param*>& out) const override { out.insert(out.end(), {&weight_, &bias_}); }
    std::optional<std::uint64_t> macs(const Shape& in) const override;

    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }
    const ConvGeometry& geometry() const { return geom_; }
    /// [out, in * k * k], row order (c, ky, kx).
    const Param& weight() const { return weight_; }
    const Param& bias() const { return bias_; }
    Param& weight() { return weight_; }
    Param& bias() { return bias_; }

private:
    Tensor run(const Tensor& x, std::vector<float>* keep_col) const;
    void check_input(const Shape& in) const;

    int in_ch_, out_ch_;
    ConvGeometry geom_;
    Param weight_, bias_;
    std::vector<float> col_;
    Shape in_shape_;
};

class ConvTranspose2d : public Layer {
public:
    ConvTranspose2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad, int output_pad, Rng& rng);

    std::string kind() const override { return "conv_transpose2d"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(ParamList& out) override { out.insert(out.end(), {&weight_, &bias_}); }
    void collect(std::vector<const Param*>& out) const override { out.insert(out.end(), {&weight_, &bias_}); }
    std::optional<std::uint64_t> macs(const Shape& in) const override;

private:
    int in_ch_, out_ch_;
    ConvGeometry geom_;
    int output_pad_;
    Param weight_, bias_;  // weight [in, out * k * k]
    Tensor input_;
};

/// Generalised divisive normalisation, or its inverse:
/// y_c = x_c / sqrt(beta_c + sum_j gamma_cj x_j^2)   (forward)
/// y_c = x_c * sqrt(beta_c + sum_j gamma_cj x_j^2)   (inverse)
class Gdn : public Layer {
public:
    Gdn(std::string name, int channels, bool inverse);

    std::string kind() const override { return inverse_ ? "igdn" : "gdn"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(ParamList& out) override { out.insert(out.end(), {&beta_, &gamma_}); }
    void collect(std::vector<const Param*>& out) const override { out.insert(out.end(), {&beta_, &gamma_}); }
    std::optional<std::uint64_t> macs(const Shape& in) const override;

private:
    Tensor run(const Tensor& x, Tensor* keep_norm) const;

    int channels_;
    bool inverse_;
    Param beta_, gamma_;
    Tensor input_, norm_;
};

class Relu : public Layer {
public:
    std::string kind() const override { return "relu"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    std::optional<std::uint64_t> macs(const Shape&) const override { return 0; }

private:
    Tensor output_;
};

/// Per-channel 3x3 convolution, stride 1, zero padding 1.
class DepthwiseConv3x3 : public Layer {
public:
    DepthwiseConv3x3(std::string name, int channels, Rng& rng);

    std::string kind() const override { return "depthwise_conv3x3"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(ParamList& out) override { out.insert(out.end(), {&weight_, &bias_}); }
    void collect(std::vector<const Param*>& out) const override { out.insert(out.end(), {&weight_, &bias_}); }
    std::optional<std::uint64_t> macs(const Shape& in) const override;

private:
    int channels_;
    Param weight_, bias_;
    Tensor input_;
};

/// Splits channels in half and multiplies the halves.
class SimpleGate : public Layer {
public:
    std::string kind() const override { return "simple_gate"; }
    Shape output_shape(const Shape& in) const override { return {in.c / 2, in.h, in.w}; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    std::optional<std::uint64_t> macs(const Shape&) const override { return 0; }

private:
    Tensor input_;
};

/// Global average pool, fully connected CxC, channel-wise rescale.
class ChannelAttention : public Layer {
public:
    ChannelAttention(std::string name, int channels, Rng& rng);

    std::string kind() const override { return "channel_attention"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(ParamList& out) override { out.insert(out.end(), {&weight_, &bias_}); }
    void collect(std::vector<const Param*>& out) const override { out.insert(out.end(), {&weight_, &bias_}); }
    std::optional<std::uint64_t> macs(const Shape& in) const override;

private:
    std::vector<float> scales(const Tensor& x, std::vector<float>* pooled) const;

    int channels_;
    Param weight_, bias_;
    Tensor input_;
    std::vector<float> pooled_, scale_;
};

/// Ordered chain of layers.
class Sequential : public Layer {
public:
    Sequential() = default;

    template <class L, class... Args>
    L& add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }
    void push(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    std::string kind() const override { return "sequential"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(ParamList& out) override;
    void collect(std::vector<const Param*>& out) const override;
    std::optional<std::uint64_t> macs(const Shape& in) const override;

    /// MACs of the layers that have a rule; the kinds of those that do not
    /// are appended to `uncounted`.
    std::uint64_t count_macs(const Shape& in, std::vector<std::string>& uncounted) const;

    std::size_t size() const { return layers_.size(); }
    const Layer& at(std::size_t i) const { return *layers_[i]; }
    Layer& at(std::size_t i) { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Residual block with an elementwise gate and channel attention and no
/// pointwise nonlinearity:
///   x + conv1x1(ca(gate(dwconv3x3(conv1x1(x)))))
class GatedBlock : public Layer {
public:
    GatedBlock(std::string name, int channels, Rng& rng);

    std::string kind() const override { return "gated_block"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(ParamList& out) override { body_.collect(out); }
    void collect(std::vector<const Param*>& out) const override { body_.collect(out); }
    std::optional<std::uint64_t> macs(const Shape& in) const override { return body_.macs(in); }

private:
    Sequential body_;
};

/// Clears every gradient accumulator.
void zero_grad(const ParamList& params);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before scaling.
double clip_grad_norm(const ParamList& params, double max_norm);

}  // namespace rdcl::nn
