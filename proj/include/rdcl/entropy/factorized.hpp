#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rdcl/core/rng.hpp"
#include "rdcl/core/tensor.hpp"
#include "rdcl/entropy/cdf_table.hpp"
#include "rdcl/entropy/gaussian.hpp"
#include "rdcl/nn/param.hpp"

namespace rdcl::entropy {

/// Learned per-channel density for the hyper-latent z.
///
/// Each channel's CDF is sigmoid(f(t)) where f is a chain of small affine
/// maps with non-negative (softplus) weights, each but the last followed by
/// t + tanh(a) * tanh(t). Every stage is increasing, so the CDF is monotone
/// with limits 0 and 1.
class FactorizedModel {
public:
    FactorizedModel() = default;
    FactorizedModel(int channels, std::vector<int> filters = {3, 3, 3}, double init_scale = 10.0,
                    std::uint64_t seed = 0);

    int channels() const { return channels_; }
    const std::vector<int>& dims() const { return dims_; }

    /// CDF of channel c at t, computed with platform-independent math.
    double cdf(int c, double t) const;

    /// Probability of the unit bin centred at `value` (training path).
    double likelihood(int c, double value) const;

    /// -log2 likelihood (floored) and its derivative with respect to value;
    /// parameter gradients scaled by `upstream` are accumulated.
    struct BitsGrad {
        double bits;
        double d_value;
    };
    BitsGrad bits_grad(int c, double value, double upstream);

    nn::ParamList params();
    std::vector<const nn::Param*> params() const;

private:
    template <class Math>
    double logits(int c, double t, std::vector<double>* trace = nullptr) const;
    void backward_logits(int c, std::span<const double> trace, double upstream, double& d_t);

    int channels_ = 0;
    std::vector<int> dims_;          // {1, filters..., 1}
    std::vector<nn::Param> matrix_;  // per layer [C, out, in], raw (softplus applied)
    std::vector<nn::Param> bias_;    // per layer [C, out]
    std::vector<nn::Param> factor_;  // per non-final layer [C, out], raw (tanh applied)
};

/// -log2(cdf(value + 0.5) - cdf(value - 0.5)), floored, for any CDF callable.
template <class Cdf>
double unit_bin_bits(const Cdf& cdf, double value) {
    const double p = cdf(value + 0.5) - cdf(value - 0.5);
    return -std::log2(p < kLikelihoodFloor ? kLikelihoodFloor : p);
}

/// Total bits of integer z symbols ([C,H,W] order) under the model.
double factorized_bits(std::span<const std::int32_t> z_symbols, const Shape& z_shape, const FactorizedModel& model);

/// One CdfTable per channel.
std::vector<CdfTable> factorized_cdf(const FactorizedModel& model, int precision = kDefaultPrecision,
                                     double tail_mass = kDefaultTailMass);

}  // namespace rdcl::entropy
