#include "rdcl/model.hpp"

#include <algorithm>
#include <cmath>

#include "rdcl/entropy/range_coder.hpp"
#include "rdcl/evaluation.hpp"
#include "rdcl/io/image.hpp"

namespace rdcl {

using context::ContextModel;
using entropy::Bitstream;

namespace {

constexpr double kPeakSquared = 255.0 * 255.0;
constexpr float kMinGain = 1e-3f;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + salt * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void check_rgb(const Tensor& image) {
    if (image.channels() != 3 || image.height() < 1 || image.width() < 1)
        throw ContractError("expected an RGB image [3,H,W], got " + image.shape().str());
}

void check_finite(const Tensor& t, const char* what) {
    for (float v : t.values())
        if (!std::isfinite(v)) throw TrainingError(std::string("non-finite values in ") + what);
}

}  // namespace

std::string to_string(QuantizerMode mode) { return mode == QuantizerMode::noise ? "noise" : "ste"; }

QuantizerMode parse_quantizer(const std::string& name) {
    if (name == "noise") return QuantizerMode::noise;
    if (name == "ste") return QuantizerMode::ste;
    throw ConfigError("unknown quantizer '" + name + "' (expected noise or ste)");
}

CompressionModel::CompressionModel(const ModelConfig& config) : config_(config) {
    config_.grid.validate();
    auto built = transforms::TransformRegistry::global().build(config_.transform, config_.transform_config);
    transform_ = std::move(built.transform);
    hyper_ = std::move(built.hyper);
    context::ContextConfig cc;
    cc.kind = config_.context;
    cc.M = config_.transform_config.M;
    cc.hidden = config_.context_hidden;
    cc.kernel = config_.context_kernel;
    cc.seed = mix_seed(config_.transform_config.seed, 3);
    context_ = std::make_unique<ContextModel>(cc);
    prior_ = entropy::FactorizedModel(config_.transform_config.N, {3, 3, 3}, 10.0,
                                      mix_seed(config_.transform_config.seed, 4));
    gains_ = nn::Param("gains", {static_cast<int>(config_.grid.size())});
    gains_.value = rate::init_gains(config_.grid);
}

CompressionModel::~CompressionModel() = default;
CompressionModel::CompressionModel(CompressionModel&&) noexcept = default;
CompressionModel& CompressionModel::operator=(CompressionModel&&) noexcept = default;

std::uint8_t CompressionModel::model_id() const { return context::model_id(config_.context, config_.transform); }

std::vector<float> CompressionModel::gains() const { return gains_.value; }

float CompressionModel::gain(std::size_t index) const {
    if (index >= gains_.size()) throw LookupError("gain index " + std::to_string(index) + " out of range");
    return gains_.value[index];
}

double CompressionModel::gain_at(double t) const { return rate::interpolate_gain(gains_.value, t); }

CompressionModel::HyperCode CompressionModel::code_hyper(const Tensor& y_scaled) const {
    const Tensor z = hyper_->hyper_analyze(y_scaled);
    HyperCode hc;
    hc.z_shape = z.shape();
    hc.z_symbols.resize(z.size());
    Tensor z_hat(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const float r = rate::round_half_away(z[i]);
        if (!(std::fabs(r) < 1e9f)) throw EncodeError("hyper-latent value out of range");
        hc.z_symbols[i] = static_cast<std::int32_t>(r);
        z_hat[i] = static_cast<float>(hc.z_symbols[i]);
    }
    hc.features = hyper_->hyper_synthesize(z_hat);
    return hc;
}

Bitstream CompressionModel::compress(const Tensor& image, double gain) const {
    check_rgb(image);
    if (!(gain > 0.0) || !std::isfinite(gain)) throw DomainError("compress: gain must be positive and finite");
    const auto g = static_cast<float>(gain);
    const Tensor x = io::pad_replicate(image, transforms::kImageAlign);
    const Tensor y_scaled = rate::apply_gain(transform_->analyze(x), {g, false});
    const HyperCode hc = code_hyper(y_scaled);

    const auto tables = entropy::factorized_cdf(prior_);
    std::vector<const entropy::CdfTable*> refs(hc.z_symbols.size());
    const std::size_t plane = hc.z_shape.plane();
    for (std::size_t i = 0; i < refs.size(); ++i) refs[i] = &tables[i / plane];

    Bitstream bs;
    bs.model_id = model_id();
    bs.gain = g;
    bs.width = static_cast<std::uint32_t>(image.width());
    bs.height = static_cast<std::uint32_t>(image.height());
    bs.segments.push_back(entropy::range_encode(hc.z_symbols, refs));
    auto coded = context::encode_scaled(*context_, y_scaled, hc.features);
    for (auto& s : coded.segments) bs.segments.push_back(std::move(s));
    return bs;
}

Tensor CompressionModel::decompress(std::span<const std::uint8_t> bytes) const {
    return decompress(Bitstream::parse(bytes, model_id()));
}

Tensor CompressionModel::decompress(const Bitstream& bs) const {
    using DE = DecodeError;
    if (bs.model_id != model_id())
        throw DE(DE::Kind::ModelMismatch, "bitstream model id does not match the checkpoint", 5);
    if (!(bs.gain > 0.0f) || !std::isfinite(bs.gain)) throw DE(DE::Kind::Corrupt, "bitstream gain is not positive", 6);
    if (bs.width == 0 || bs.height == 0 || bs.width > (1u << 16) || bs.height > (1u << 16))
        throw DE(DE::Kind::Corrupt, "bitstream dimensions out of range", 10);
    if (bs.segments.empty()) throw DE(DE::Kind::Truncated, "bitstream has no hyper-latent segment", entropy::kHeaderBytes);

    const int a = transforms::kImageAlign;
    const int ph = (static_cast<int>(bs.height) + a - 1) / a * a;
    const int pw = (static_cast<int>(bs.width) + a - 1) / a * a;
    const int hyper_stride = transforms::kLatentStride * transforms::kHyperStride;
    const Shape z_shape{config_.transform_config.N, ph / hyper_stride, pw / hyper_stride};

    const auto tables = entropy::factorized_cdf(prior_);
    std::vector<const entropy::CdfTable*> refs(z_shape.size());
    for (std::size_t i = 0; i < refs.size(); ++i) refs[i] = &tables[i / z_shape.plane()];
    const auto z_symbols = entropy::range_decode(bs.segments[0], refs);
    Tensor z_hat(z_shape);
    for (std::size_t i = 0; i < z_hat.size(); ++i) z_hat[i] = static_cast<float>(z_symbols[i]);
    const Tensor features = hyper_->hyper_synthesize(z_hat);

    const std::span<const std::vector<std::uint8_t>> y_segments(bs.segments.data() + 1, bs.segments.size() - 1);
    const Tensor y_scaled = context::decode_scaled(*context_, y_segments, features);
    const Tensor x = transform_->synthesize(rate::remove_gain(y_scaled, {bs.gain, false}));
    return io::crop(x, static_cast<int>(bs.height), static_cast<int>(bs.width));
}

LatentView CompressionModel::analyze_latent(const Tensor& image, double gain) const {
    check_rgb(image);
    if (!(gain > 0.0)) throw DomainError("analyze_latent: gain must be positive");
    const Tensor x = io::pad_replicate(image, transforms::kImageAlign);
    const Tensor y_scaled = rate::apply_gain(transform_->analyze(x), {static_cast<float>(gain), false});
    const HyperCode hc = code_hyper(y_scaled);
    auto coded = context::encode_scaled(*context_, y_scaled, hc.features);
    LatentView v;
    v.y_hat = std::move(coded.y_hat);
    v.params = std::move(coded.params);
    v.symbols = std::move(coded.symbols);
    v.bits_z = entropy::factorized_bits(hc.z_symbols, hc.z_shape, prior_);
    v.height = image.height();
    v.width = image.width();
    return v;
}

RDTerms CompressionModel::evaluate(const Tensor& image, double gain, double lambda) const {
    check_rgb(image);
    const auto g = static_cast<float>(gain);
    const Tensor x = io::pad_replicate(image, transforms::kImageAlign);
    const Tensor y_scaled = rate::apply_gain(transform_->analyze(x), {g, false});
    const HyperCode hc = code_hyper(y_scaled);
    const auto coded = context::encode_scaled(*context_, y_scaled, hc.features);
    const Tensor x_hat = io::crop(transform_->synthesize(rate::remove_gain(coded.y_hat, {g, false})),
                                  image.height(), image.width());
    RDTerms t;
    const double pixels = static_cast<double>(image.height()) * image.width();
    t.bits_y = entropy::estimate_centered_bits(coded.symbols, coded.params.sigma);
    t.bits_z = entropy::factorized_bits(hc.z_symbols, hc.z_shape, prior_);
    t.bpp = (t.bits_y + t.bits_z) / pixels;
    t.mse = eval::mse(image, x_hat);
    t.distortion = kPeakSquared * t.mse;
    t.loss = t.bpp + lambda * t.distortion;
    t.psnr = eval::psnr_from_mse(t.mse);
    return t;
}

RDTerms CompressionModel::train_step(const Tensor& image, std::size_t gain_index, double lambda, QuantizerMode mode,
                                     Rng& rng, double grad_scale) {
    check_rgb(image);
    if (gain_index >= gains_.size()) throw LookupError("gain index out of range");
    const float a = gains_.value[gain_index];
    const double pixels = static_cast<double>(image.height()) * image.width();
    const double rate_scale = grad_scale / pixels;

    // Forward.
    const Tensor y = transform_->analyze_train(image);
    Tensor ys = y;
    for (float& v : ys.values()) v *= a;
    const Tensor z = hyper_->hyper_analyze_train(ys);
    Tensor z_hat = z;
    if (mode == QuantizerMode::noise) {
        for (float& v : z_hat.values()) v += rng.uniform_centered();
    } else {
        for (float& v : z_hat.values()) v = rate::round_half_away(v);
    }
    const Tensor features = hyper_->hyper_synthesize_train(z_hat);

    Tensor noise;
    ContextModel::Quantizer quantize;
    if (mode == QuantizerMode::noise) {
        noise = Tensor(ys.shape());
        for (float& v : noise.values()) v = rng.uniform_centered();
        quantize = [&noise](float v, float, std::size_t i) { return v + noise[i]; };
    } else {
        quantize = [](float v, float mu, std::size_t) {
            const double r = std::round(static_cast<double>(v) - static_cast<double>(mu));
            return static_cast<float>(r + static_cast<double>(mu));
        };
    }
    auto fwd = context_->forward_train(features, ys, quantize);
    const Tensor& y_hat = fwd.y_hat;

    Tensor y_dec = y_hat;
    for (float& v : y_dec.values()) v /= a;
    const Tensor x_hat = transform_->synthesize_train(y_dec);

    // Rate of y and its gradients.
    RDTerms t;
    Tensor d_mu(ys.shape()), d_sigma(ys.shape()), d_y_hat(ys.shape());
    for (std::size_t i = 0; i < y_hat.size(); ++i) {
        const double r = static_cast<double>(y_hat[i]) - static_cast<double>(fwd.params.mu[i]);
        const auto bg = entropy::gaussian_bits_grad(r, fwd.params.sigma[i]);
        t.bits_y += bg.bits;
        d_y_hat[i] = static_cast<float>(bg.d_residual * rate_scale);
        d_mu[i] = static_cast<float>(-bg.d_residual * rate_scale);
        d_sigma[i] = static_cast<float>(bg.d_sigma * rate_scale);
    }
    // Rate of z.
    Tensor d_z_hat(z_hat.shape());
    const std::size_t zplane = z_hat.shape().plane();
    for (std::size_t i = 0; i < z_hat.size(); ++i) {
        const auto bg = prior_.bits_grad(static_cast<int>(i / zplane), z_hat[i], rate_scale);
        t.bits_z += bg.bits;
        d_z_hat[i] = static_cast<float>(bg.d_value);
    }
    // Distortion.
    double sq = 0.0;
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double d = static_cast<double>(x_hat[i]) - image[i];
        sq += d * d;
    }
    t.mse = sq / static_cast<double>(image.size());
    t.distortion = kPeakSquared * t.mse;
    t.bpp = (t.bits_y + t.bits_z) / pixels;
    t.loss = t.bpp + lambda * t.distortion;
    t.psnr = eval::psnr_from_mse(t.mse);
    if (!std::isfinite(t.loss))
        throw TrainingError("loss is not finite (bpp " + std::to_string(t.bpp) + ", mse " + std::to_string(t.mse) + ")");

    // Backward.
    const double d_scale = grad_scale * lambda * kPeakSquared * 2.0 / static_cast<double>(image.size());
    Tensor d_x_hat(x_hat.shape());
    for (std::size_t i = 0; i < x_hat.size(); ++i)
        d_x_hat[i] = static_cast<float>(d_scale * (static_cast<double>(x_hat[i]) - image[i]));
    const Tensor d_y_dec = transform_->synthesize_backward(d_x_hat);
    double d_a = 0.0;
    for (std::size_t i = 0; i < d_y_dec.size(); ++i) {
        d_y_hat[i] += d_y_dec[i] / a;
        d_a -= static_cast<double>(d_y_dec[i]) * y_hat[i] / (static_cast<double>(a) * a);
    }
    Tensor d_features(features.shape());
    context_->backward(d_mu, d_sigma, d_features, d_y_hat);
    Tensor& d_ys = d_y_hat;
    const Tensor d_z_from_features = hyper_->hyper_synthesize_backward(d_features);
    for (std::size_t i = 0; i < d_z_hat.size(); ++i) d_z_hat[i] += d_z_from_features[i];
    const Tensor d_ys_hyper = hyper_->hyper_analyze_backward(d_z_hat);
    Tensor d_y(y.shape());
    for (std::size_t i = 0; i < d_ys.size(); ++i) {
        const float g = d_ys[i] + d_ys_hyper[i];
        d_a += static_cast<double>(g) * y[i];
        d_y[i] = g * a;
    }
    check_finite(d_y, "latent gradient");
    transform_->analyze_backward(d_y);
    if (!std::isfinite(d_a)) throw TrainingError("non-finite gain gradient");
    gains_.grad[gain_index] += static_cast<float>(d_a);
    return t;
}

void CompressionModel::clamp_gains() {
    for (float& g : gains_.value) g = std::max(g, kMinGain);
}

nn::ParamList CompressionModel::params() {
    nn::ParamList out;
    transform_->collect(out);
    hyper_->collect(out);
    context_->collect(out);
    for (nn::Param* p : prior_.params()) out.push_back(p);
    out.push_back(&gains_);
    return out;
}

std::vector<const nn::Param*> CompressionModel::params() const {
    std::vector<const nn::Param*> out;
    transform_->collect(out);
    hyper_->collect(out);
    context_->collect(out);
    for (const nn::Param* p : prior_.params()) out.push_back(p);
    out.push_back(&gains_);
    return out;
}

std::size_t CompressionModel::parameter_count() const {
    std::size_t n = 0;
    for (const nn::Param* p : params()) n += p->size();
    return n;
}

std::uint64_t CompressionModel::macs(int height, int width, std::vector<std::string>& uncounted) const {
    const int lh = height / transforms::kLatentStride, lw = width / transforms::kLatentStride;
    return transform_->macs(height, width, uncounted) + hyper_->macs(lh, lw, uncounted) +
           context_->macs(lh, lw, uncounted);
}

}  // namespace rdcl
