#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rdcl/context_models.hpp"
#include "rdcl/core/rng.hpp"
#include "rdcl/core/tensor.hpp"
#include "rdcl/entropy/bitstream.hpp"
#include "rdcl/entropy/factorized.hpp"
#include "rdcl/nn/optim.hpp"
#include "rdcl/rate_control.hpp"
#include "rdcl/transforms.hpp"

namespace rdcl {

struct ModelConfig {
    std::string transform = "baseline_conv";
    context::ContextKind context = context::ContextKind::hyperprior;
    transforms::TransformConfig transform_config;
    int context_hidden = 0;  // 0 selects M (scctx is then matched to charm)
    int context_kernel = 3;
    rate::LambdaGrid grid = rate::LambdaGrid::standard();

    bool operator==(const ModelConfig&) const = default;
};

enum class QuantizerMode { noise, ste };

std::string to_string(QuantizerMode mode);
QuantizerMode parse_quantizer(const std::string& name);

/// Rate and distortion of one image, in the loss's units.
struct RDTerms {
    double bits_y = 0.0;
    double bits_z = 0.0;
    double bpp = 0.0;  // (bits_y + bits_z) / pixels
    double mse = 0.0;  // on [0,1] pixels
    double distortion = 0.0;  // 255^2 * mse
    double loss = 0.0;
    double psnr = 0.0;
};

/// Latent-side view of a coded image, for the analysis tools.
struct LatentView {
    Tensor y_hat;                  // gained domain
    entropy::EntropyParams params;  // mu and clamped sigma, gained domain
    std::vector<std::int32_t> symbols;
    double bits_z = 0.0;
    int height = 0;  // true image dims
    int width = 0;
};

/// Transform pair, hyper pair, hyper prior, context model and gain vector:
/// everything needed to code an image and to train end to end.
class CompressionModel {
public:
    explicit CompressionModel(const ModelConfig& config);
    ~CompressionModel();
    CompressionModel(CompressionModel&&) noexcept;
    CompressionModel& operator=(CompressionModel&&) noexcept;

    const ModelConfig& config() const { return config_; }
    std::uint8_t model_id() const;
    int latent_channels() const { return config_.transform_config.M; }

    /// Trained gain per grid slot.
    std::vector<float> gains() const;
    float gain(std::size_t index) const;
    /// Gain at fractional grid position t in [0, n-1].
    double gain_at(double t) const;

    /// Pads by edge replication to multiples of 64, codes, and records the
    /// true dims. Throws ContractError for non-RGB input, DomainError for
    /// non-positive gains.
    entropy::Bitstream compress(const Tensor& image, double gain) const;
    /// Throws DecodeError on malformed or mismatched streams.
    Tensor decompress(const entropy::Bitstream& stream) const;
    Tensor decompress(std::span<const std::uint8_t> bytes) const;

    /// Latent, entropy parameters and symbols the encoder would produce.
    LatentView analyze_latent(const Tensor& image, double gain) const;

    /// Loss of the hard-quantized coding path with estimated bits, no
    /// gradients. The reconstruction is clamped, as after decoding.
    RDTerms evaluate(const Tensor& image, double gain, double lambda) const;

    /// One forward and backward pass on an image whose sides are multiples
    /// of 64. Gradients are scaled by `grad_scale` and accumulated; the
    /// caller zeroes, clips and steps. Throws TrainingError when the loss
    /// or any gradient is not finite.
    RDTerms train_step(const Tensor& image, std::size_t gain_index, double lambda, QuantizerMode mode, Rng& rng,
                       double grad_scale);

    /// Keeps every gain positive after an optimizer step.
    void clamp_gains();

    nn::ParamList params();
    std::vector<const nn::Param*> params() const;
    std::size_t parameter_count() const;
    /// Multiply-accumulates of one encode plus decode pass at H x W.
    std::uint64_t macs(int height, int width, std::vector<std::string>& uncounted) const;

    const transforms::TransformPair& transform() const { return *transform_; }
    const transforms::HyperPair& hyper() const { return *hyper_; }
    const context::ContextModel& context_model() const { return *context_; }
    const entropy::FactorizedModel& prior() const { return prior_; }

private:
    struct HyperCode {
        Tensor features;
        std::vector<std::int32_t> z_symbols;
        Shape z_shape;
    };
    HyperCode code_hyper(const Tensor& y_scaled) const;

    ModelConfig config_;
    std::unique_ptr<transforms::TransformPair> transform_;
    std::unique_ptr<transforms::HyperPair> hyper_;
    std::unique_ptr<context::ContextModel> context_;
    entropy::FactorizedModel prior_;
    nn::Param gains_;
};

/// Saved optimizer progress for resuming.
struct OptimizerState {
    std::size_t steps = 0;
    double lr = 0.0;
    std::map<std::string, nn::Adam::Moments> moments;
};

/// Training position stored alongside the weights.
struct TrainingState {
    int phase = 0;
    int epoch = 0;
    std::optional<OptimizerState> optimizer;
};

/// Single-file archive "RDCK": JSON header (config, grid, gains, tensor
/// directory) followed by little-endian float32 tensor data.
void save_checkpoint(const std::filesystem::path& path, const CompressionModel& model,
                     const TrainingState& state = {});
std::vector<std::uint8_t> serialize_checkpoint(const CompressionModel& model, const TrainingState& state = {});

struct LoadedCheckpoint {
    std::unique_ptr<CompressionModel> model;
    TrainingState state;
};
/// Throws DataError for unreadable or inconsistent files.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace rdcl
