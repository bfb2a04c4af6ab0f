#include "rdcl/entropy/gaussian.hpp"

#include <cmath>

namespace rdcl::entropy {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kInvLn2 = 1.44269504088896340736;

double phi(double t) { return 0.5 * std::erfc(-t * kInvSqrt2); }
double density(double t) { return kInvSqrt2Pi * std::exp(-0.5 * t * t); }

}  // namespace

double gaussian_likelihood(double residual, double sigma) {
    const double s = clamp_sigma(sigma);
    // Evaluated on the lower tail so both signs lose no precision and the
    // result is exactly symmetric in the residual.
    const double v = std::fabs(residual);
    return phi((0.5 - v) / s) - phi((-0.5 - v) / s);
}

double gaussian_symbol_bits(std::int32_t symbol, double mu_frac, double sigma) {
    const double p = gaussian_likelihood(static_cast<double>(symbol) - mu_frac, sigma);
    return -std::log2(p < kLikelihoodFloor ? kLikelihoodFloor : p);
}

double estimate_rate_bits(std::span<const std::int32_t> symbols, const EntropyParams& params) {
    if (symbols.size() != params.mu.size()) throw ContractError("estimate_rate_bits: symbol count does not match params");
    double total = 0.0;
    for (std::size_t i = 0; i < symbols.size(); ++i)
        total += gaussian_symbol_bits(symbols[i], params.mu[i], params.sigma[i]);
    return total;
}

double estimate_centered_bits(std::span<const std::int32_t> symbols, const Tensor& sigma) {
    if (symbols.size() != sigma.size()) throw ContractError("estimate_centered_bits: symbol count does not match sigma");
    double total = 0.0;
    for (std::size_t i = 0; i < symbols.size(); ++i) total += gaussian_symbol_bits(symbols[i], 0.0, sigma[i]);
    return total;
}

BitsGrad gaussian_bits_grad(double residual, double sigma) {
    const double s = clamp_sigma(sigma);
    const double v = std::fabs(residual);
    const double upper = (0.5 - v) / s;
    const double lower = (-0.5 - v) / s;
    const double p = phi(upper) - phi(lower);
    const double pf = p < kLikelihoodFloor ? kLikelihoodFloor : p;
    const double dbits_dp = -kInvLn2 / pf;

    const double du = density(upper), dl = density(lower);
    const double dp_dv = (dl - du) / s;
    const double dp_ds = -(upper * du - lower * dl) / s;

    BitsGrad g;
    g.bits = -std::log2(pf);
    const double sign = residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0);
    g.d_residual = dbits_dp * dp_dv * sign;
    g.d_sigma = dbits_dp * dp_ds;
    // Below the clamp only a push back upward gets through.
    if (sigma < kSigmaMin && g.d_sigma > 0.0) g.d_sigma = 0.0;
    return g;
}

}  // namespace rdcl::entropy
