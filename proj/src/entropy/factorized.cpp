#include "rdcl/entropy/factorized.hpp"

#include <cmath>
#include <string>

#include "rdcl/core/detmath.hpp"
#include "rdcl/core/error.hpp"
#include "rdcl/entropy/gaussian.hpp"

namespace rdcl::entropy {

namespace {

struct StdMath {
    static double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
    static double tanh(double x) { return std::tanh(x); }
    static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
};

struct DetMath {
    static double softplus(double x) { return detmath::softplus(x); }
    static double tanh(double x) { return detmath::tanh(x); }
    static double sigmoid(double x) { return detmath::sigmoid(x); }
};

double sigmoid_grad(double x) {
    const double s = StdMath::sigmoid(x);
    return s * (1.0 - s);
}

constexpr double kInvLn2 = 1.44269504088896340736;

}  // namespace

FactorizedModel::FactorizedModel(int channels, std::vector<int> filters, double init_scale, std::uint64_t seed)
    : channels_(channels) {
    if (channels <= 0) throw ConfigError("factorized model needs at least one channel");
    dims_.push_back(1);
    for (int f : filters) dims_.push_back(f);
    dims_.push_back(1);
    const int layers = static_cast<int>(dims_.size()) - 1;
    const double scale = std::pow(init_scale, 1.0 / layers);
    Rng rng(seed);
    for (int k = 0; k < layers; ++k) {
        const int in = dims_[k], out = dims_[k + 1];
        const auto init = static_cast<float>(std::log(std::expm1(1.0 / scale / out)));
        const std::string tag = std::to_string(k);
        matrix_.emplace_back("prior.matrix" + tag, std::vector<int>{channels, out, in}, init);
        nn::Param b("prior.bias" + tag, std::vector<int>{channels, out});
        for (float& v : b.value) v = static_cast<float>(rng.uniform(-0.5, 0.5));
        bias_.push_back(std::move(b));
        if (k + 1 < layers) factor_.emplace_back("prior.factor" + tag, std::vector<int>{channels, out}, 0.0f);
    }
}

template <class Math>
double FactorizedModel::logits(int c, double t, std::vector<double>* trace) const {
    // trace layout per layer: input vector, pre-nonlinearity vector.
    std::vector<double> v{t}, next;
    const int layers = static_cast<int>(dims_.size()) - 1;
    for (int k = 0; k < layers; ++k) {
        const int in = dims_[k], out = dims_[k + 1];
        if (trace) trace->insert(trace->end(), v.begin(), v.end());
        next.assign(out, 0.0);
        const float* h = matrix_[k].value.data() + static_cast<std::size_t>(c) * out * in;
        const float* b = bias_[k].value.data() + static_cast<std::size_t>(c) * out;
        for (int i = 0; i < out; ++i) {
            double acc = 0.0;
            for (int j = 0; j < in; ++j) acc += Math::softplus(h[i * in + j]) * v[j];
            next[i] = acc + b[i];
        }
        if (trace) trace->insert(trace->end(), next.begin(), next.end());
        if (k + 1 < layers) {
            const float* a = factor_[k].value.data() + static_cast<std::size_t>(c) * out;
            for (int i = 0; i < out; ++i) next[i] += Math::tanh(a[i]) * Math::tanh(next[i]);
        }
        v.swap(next);
    }
    return v[0];
}

void FactorizedModel::backward_logits(int c, std::span<const double> trace, double upstream, double& d_t) {
    const int layers = static_cast<int>(dims_.size()) - 1;
    std::vector<std::size_t> starts(layers);
    std::size_t at = 0;
    for (int k = 0; k < layers; ++k) {
        starts[k] = at;
        at += dims_[k] + dims_[k + 1];
    }
    std::vector<double> g{upstream}, gin;
    for (int k = layers - 1; k >= 0; --k) {
        const int in = dims_[k], out = dims_[k + 1];
        const double* input = trace.data() + starts[k];
        const double* pre = input + in;
        if (k + 1 < layers) {
            float* ga = factor_[k].grad.data() + static_cast<std::size_t>(c) * out;
            const float* a = factor_[k].value.data() + static_cast<std::size_t>(c) * out;
            for (int i = 0; i < out; ++i) {
                const double ta = std::tanh(a[i]), tp = std::tanh(pre[i]);
                ga[i] += static_cast<float>(g[i] * tp * (1.0 - ta * ta));
                g[i] *= 1.0 + ta * (1.0 - tp * tp);
            }
        }
        float* gb = bias_[k].grad.data() + static_cast<std::size_t>(c) * out;
        float* gh = matrix_[k].grad.data() + static_cast<std::size_t>(c) * out * in;
        const float* h = matrix_[k].value.data() + static_cast<std::size_t>(c) * out * in;
        gin.assign(in, 0.0);
        for (int i = 0; i < out; ++i) {
            gb[i] += static_cast<float>(g[i]);
            for (int j = 0; j < in; ++j) {
                gh[i * in + j] += static_cast<float>(g[i] * input[j] * StdMath::sigmoid(h[i * in + j]));
                gin[j] += g[i] * StdMath::softplus(h[i * in + j]);
            }
        }
        g.swap(gin);
    }
    d_t += g[0];
}

double FactorizedModel::cdf(int c, double t) const { return DetMath::sigmoid(logits<DetMath>(c, t)); }

double FactorizedModel::likelihood(int c, double value) const {
    const double upper = logits<StdMath>(c, value + 0.5);
    const double lower = logits<StdMath>(c, value - 0.5);
    // Evaluate on whichever tail keeps the difference well conditioned.
    const double s = (upper + lower) > 0.0 ? -1.0 : 1.0;
    return std::fabs(StdMath::sigmoid(s * upper) - StdMath::sigmoid(s * lower));
}

FactorizedModel::BitsGrad FactorizedModel::bits_grad(int c, double value, double upstream) {
    std::vector<double> tu, tl;
    const double upper = logits<StdMath>(c, value + 0.5, &tu);
    const double lower = logits<StdMath>(c, value - 0.5, &tl);
    const double s = (upper + lower) > 0.0 ? -1.0 : 1.0;
    const double p = std::fabs(StdMath::sigmoid(s * upper) - StdMath::sigmoid(s * lower));
    const double pf = p < kLikelihoodFloor ? kLikelihoodFloor : p;
    const double dbits_dp = -kInvLn2 / pf;
    double d_value = 0.0;
    backward_logits(c, tu, upstream * dbits_dp * sigmoid_grad(upper), d_value);
    backward_logits(c, tl, -upstream * dbits_dp * sigmoid_grad(lower), d_value);
    return {-std::log2(pf), d_value};
}

nn::ParamList FactorizedModel::params() {
    nn::ParamList out;
    for (std::size_t k = 0; k < matrix_.size(); ++k) {
        out.push_back(&matrix_[k]);
        out.push_back(&bias_[k]);
        if (k < factor_.size()) out.push_back(&factor_[k]);
    }
    return out;
}

std::vector<const nn::Param*> FactorizedModel::params() const {
    std::vector<const nn::Param*> out;
    for (std::size_t k = 0; k < matrix_.size(); ++k) {
        out.push_back(&matrix_[k]);
        out.push_back(&bias_[k]);
        if (k < factor_.size()) out.push_back(&factor_[k]);
    }
    return out;
}

double factorized_bits(std::span<const std::int32_t> z_symbols, const Shape& z_shape, const FactorizedModel& model) {
    if (z_shape.c != model.channels()) throw ContractError("factorized_bits: channel count does not match the model");
    if (z_symbols.size() != z_shape.size()) throw ContractError("factorized_bits: symbol count does not match shape");
    double bits = 0.0;
    const std::size_t plane = z_shape.plane();
    for (std::size_t i = 0; i < z_symbols.size(); ++i) {
        const double p = model.likelihood(static_cast<int>(i / plane), z_symbols[i]);
        bits -= std::log2(p < kLikelihoodFloor ? kLikelihoodFloor : p);
    }
    return bits;
}

std::vector<CdfTable> factorized_cdf(const FactorizedModel& model, int precision, double tail_mass) {
    std::vector<CdfTable> tables;
    tables.reserve(model.channels());
    const double half_tail = tail_mass / 2.0;
    constexpr double kSearch = 4096.0;
    for (int c = 0; c < model.channels(); ++c) {
        auto quantile = [&](double target) {
            double lo = -kSearch, hi = kSearch;
            for (int i = 0; i < 100; ++i) {
                const double mid = 0.5 * (lo + hi);
                if (model.cdf(c, mid) < target)
                    lo = mid;
                else
                    hi = mid;
            }
            return 0.5 * (lo + hi);
        };
        auto lo = static_cast<std::int32_t>(std::floor(quantile(half_tail) + 0.5));
        auto hi = static_cast<std::int32_t>(std::floor(quantile(1.0 - half_tail) + 0.5));
        const std::int32_t max_span = (1 << (precision - 1)) - 3;
        if (hi - lo + 1 > max_span) {
            const std::int32_t mid = lo + (hi - lo) / 2;
            lo = mid - max_span / 2;
            hi = lo + max_span - 1;
        }
        std::vector<double> masses;
        masses.push_back(model.cdf(c, lo - 0.5));
        double prev = masses.back();
        for (std::int32_t v = lo; v <= hi; ++v) {
            const double next = model.cdf(c, v + 0.5);
            masses.push_back(next - prev);
            prev = next;
        }
        masses.push_back(1.0 - prev);
        for (double& m : masses)
            if (m < 0.0) m = 0.0;
        CdfTable t;
        t.precision = precision;
        t.offset = lo;
        t.cdf = quantize_masses(masses, precision);
        tables.push_back(std::move(t));
    }
    return tables;
}

}  // namespace rdcl::entropy
