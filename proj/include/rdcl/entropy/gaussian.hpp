#pragma once

#include <cstdint>
#include <span>

#include "rdcl/core/tensor.hpp"

namespace rdcl::entropy {

/// Smallest scale the entropy model will use; predictions below are clamped.
inline constexpr double kSigmaMin = 0.11;
/// Per-symbol likelihood floor, 2^-15.
inline constexpr double kLikelihoodFloor = 1.0 / 32768.0;

/// Mean and scale of the conditional Gaussian for every latent element.
struct EntropyParams {
    Tensor mu;
    Tensor sigma;

    EntropyParams() = default;
    EntropyParams(Tensor m, Tensor s) : mu(std::move(m)), sigma(std::move(s)) {
        require_same_shape(mu, sigma, "EntropyParams");
    }
    explicit EntropyParams(Shape shape) : mu(shape), sigma(shape, static_cast<float>(kSigmaMin)) {}

    const Shape& shape() const { return mu.shape(); }
};

inline double clamp_sigma(double sigma) { return sigma < kSigmaMin ? kSigmaMin : sigma; }

/// Probability mass of the unit bin centred on `residual` under N(0, sigma).
double gaussian_likelihood(double residual, double sigma);

/// -log2 P(symbol) for N(mu_frac, sigma) discretised on integer bins,
/// floored at kLikelihoodFloor. With mean-centred coding mu_frac is 0.
double gaussian_symbol_bits(std::int32_t symbol, double mu_frac, double sigma);

/// Sum of gaussian_symbol_bits over all elements; `params.mu` holds the
/// residual means (all zero for centred symbols).
double estimate_rate_bits(std::span<const std::int32_t> symbols, const EntropyParams& params);

/// Bits of centred symbols, which are coded under N(0, sigma).
double estimate_centered_bits(std::span<const std::int32_t> symbols, const Tensor& sigma);

/// Bits of a continuous residual together with its partial derivatives,
/// for training with noisy or straight-through latents. Below kSigmaMin the
/// scale gradient is kept only when descent would raise sigma.
struct BitsGrad {
    double bits = 0.0;
    double d_residual = 0.0;
    double d_sigma = 0.0;
};
BitsGrad gaussian_bits_grad(double residual, double sigma);

}  // namespace rdcl::entropy
