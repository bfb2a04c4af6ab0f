#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rdcl/core/rng.hpp"
#include "rdcl/core/tensor.hpp"

namespace rdcl::rate {

inline constexpr double kLambdaRef = 0.0018;

/// The ordered set of Lagrange multipliers one variable-rate model is
/// trained over, plus the reference multiplier at which the gain is 1.
struct LambdaGrid {
    std::vector<double> values;
    double lambda_ref = kLambdaRef;

    bool operator==(const LambdaGrid&) const = default;

    /// Eleven multipliers spanning roughly 0.16 to 2.8 bpp at full scale.
    static LambdaGrid standard();

    /// Throws ConfigError unless values are positive, strictly increasing
    /// and contain lambda_ref.
    void validate() const;

    std::size_t size() const { return values.size(); }
    /// Index of `lambda` in the grid; throws LookupError if absent.
    std::size_t index_of(double lambda) const;
};

/// Scalar that multiplies the latent before quantization.
struct GainParameter {
    double a = 1.0;
    bool trainable = true;
};

/// a = sqrt(lambda / lambda_ref).
GainParameter init_gain(double lambda, double lambda_ref = kLambdaRef);

/// Initial gain vector for a whole grid, one slot per multiplier.
std::vector<float> init_gains(const LambdaGrid& grid);

/// Gain at fractional grid position `t` in [0, n-1], geometric between
/// neighbouring slots.
double interpolate_gain(std::span<const float> gains, double t);

Tensor apply_gain(const Tensor& y, const GainParameter& g);
Tensor remove_gain(const Tensor& y_scaled, const GainParameter& g);

/// Round half away from zero.
inline float round_half_away(float v) { return std::round(v); }

/// y + u with u ~ U(-0.5, 0.5) drawn from `rng`.
Tensor quantize_noise(const Tensor& y, Rng& rng);
Tensor quantize_noise(const Tensor& y, std::uint64_t seed);

/// Forward pass of the straight-through estimator: elementwise rounding.
/// Its backward is the identity; see quantize_ste_backward.
Tensor quantize_ste(const Tensor& y);
inline const Tensor& quantize_ste_backward(const Tensor& grad_out) { return grad_out; }

struct CenteredQuantization {
    std::vector<std::int32_t> symbols;  // round(y - mu)
    Tensor y_hat;                       // symbols + mu
};

/// round(y - mu) for one element, computed in double. Throws DomainError
/// when the residual is beyond what the coder can carry.
std::int32_t center_symbol(float y, float mu);

/// Codes the residual around the predicted mean rather than y itself.
CenteredQuantization center_quantize(const Tensor& y, const Tensor& mu);

/// Reconstruction of one centered symbol. Encoder and decoder both go
/// through this so the reconstructed latent matches bit for bit.
inline float dequantize_one(std::int32_t symbol, float mu) {
    return static_cast<float>(static_cast<double>(symbol) + static_cast<double>(mu));
}

/// Inverse of center_quantize on the decoder side.
Tensor center_dequantize(std::span<const std::int32_t> symbols, const Tensor& mu);

}  // namespace rdcl::rate
