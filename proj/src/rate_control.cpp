#include "rdcl/rate_control.hpp"

#include <cmath>
#include <string>

namespace rdcl::rate {

LambdaGrid LambdaGrid::standard() {
    return {{0.0018, 0.0035, 0.0067, 0.0130, 0.0250, 0.0483, 0.0932, 0.1800, 0.3600, 0.7200, 1.4400}, kLambdaRef};
}

void LambdaGrid::validate() const {
    if (values.empty()) throw ConfigError("lambda grid is empty");
    if (!(lambda_ref > 0.0)) throw ConfigError("lambda_ref must be positive");
    bool has_ref = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0.0)) throw ConfigError("lambda values must be positive");
        if (i > 0 && !(values[i] > values[i - 1])) throw ConfigError("lambda values must be strictly increasing");
        if (values[i] == lambda_ref) has_ref = true;
    }
    if (!has_ref) throw ConfigError("lambda_ref is not one of the grid values");
}

std::size_t LambdaGrid::index_of(double lambda) const {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i] == lambda) return i;
    throw LookupError("lambda " + std::to_string(lambda) + " is not in the grid");
}

GainParameter init_gain(double lambda, double lambda_ref) {
    if (!(lambda > 0.0) || !(lambda_ref > 0.0)) throw DomainError("init_gain: lambda and lambda_ref must be positive");
    return {std::sqrt(lambda / lambda_ref), true};
}

std::vector<float> init_gains(const LambdaGrid& grid) {
    std::vector<float> out;
    out.reserve(grid.size());
    for (double l : grid.values) out.push_back(static_cast<float>(init_gain(l, grid.lambda_ref).a));
    return out;
}

double interpolate_gain(std::span<const float> gains, double t) {
    if (gains.empty()) throw ContractError("interpolate_gain: empty gain vector");
    const double last = static_cast<double>(gains.size() - 1);
    if (!(t >= 0.0) || t > last) throw DomainError("interpolate_gain: position outside the grid");
    const std::size_t i = static_cast<std::size_t>(std::floor(t));
    if (i + 1 >= gains.size()) return gains.back();
    const double f = t - static_cast<double>(i);
    return std::exp((1.0 - f) * std::log(static_cast<double>(gains[i])) + f * std::log(static_cast<double>(gains[i + 1])));
}

Tensor apply_gain(const Tensor& y, const GainParameter& g) {
    if (!(g.a > 0.0)) throw DomainError("apply_gain: gain must be positive");
    const float a = static_cast<float>(g.a);
    Tensor out = y;
    for (float& v : out.values()) v *= a;
    return out;
}

Tensor remove_gain(const Tensor& y_scaled, const GainParameter& g) {
    if (!(g.a > 0.0)) throw DomainError("remove_gain: gain must be positive");
    const float a = static_cast<float>(g.a);
    Tensor out = y_scaled;
    for (float& v : out.values()) v /= a;
    return out;
}

Tensor quantize_noise(const Tensor& y, Rng& rng) {
    Tensor out = y;
    for (float& v : out.values()) v += rng.uniform_centered();
    return out;
}

Tensor quantize_noise(const Tensor& y, std::uint64_t seed) {
    Rng rng(seed);
    return quantize_noise(y, rng);
}

Tensor quantize_ste(const Tensor& y) {
    Tensor out = y;
    for (float& v : out.values()) v = round_half_away(v);
    return out;
}

std::int32_t center_symbol(float y, float mu) {
    const double s = std::round(static_cast<double>(y) - static_cast<double>(mu));
    if (!(std::fabs(s) < 1073741824.0)) throw DomainError("center_quantize: latent value outside the codable range");
    return static_cast<std::int32_t>(s);
}

CenteredQuantization center_quantize(const Tensor& y, const Tensor& mu) {
    require_same_shape(y, mu, "center_quantize");
    CenteredQuantization q{std::vector<std::int32_t>(y.size()), Tensor(y.shape())};
    for (std::size_t i = 0; i < y.size(); ++i) {
        q.symbols[i] = center_symbol(y[i], mu[i]);
        q.y_hat[i] = dequantize_one(q.symbols[i], mu[i]);
    }
    return q;
}

Tensor center_dequantize(std::span<const std::int32_t> symbols, const Tensor& mu) {
    if (symbols.size() != mu.size()) throw ContractError("center_dequantize: symbol count does not match mu");
    Tensor out(mu.shape());
    for (std::size_t i = 0; i < symbols.size(); ++i) out[i] = dequantize_one(symbols[i], mu[i]);
    return out;
}

}  // namespace rdcl::rate
