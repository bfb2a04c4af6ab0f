#include "rdcl/transforms.hpp"

#include <cmath>

namespace rdcl::transforms {

using nn::Conv2d;
using nn::ConvTranspose2d;
using nn::GatedBlock;
using nn::Gdn;
using nn::Relu;
using nn::Sequential;

namespace {

std::size_t count(const std::vector<const nn::Param*>& params) {
    std::size_t n = 0;
    for (const nn::Param* p : params) n += p->size();
    return n;
}

void require_positive(const TransformConfig& c) {
    if (c.M < 1 || c.N < 1 || c.width < 1 || c.blocks < 0) throw ConfigError("transform config: widths must be positive");
}

}  // namespace

// --------------------------------------------------------- TransformPair

TransformPair::TransformPair(std::string name, int latent_channels, std::unique_ptr<Sequential> analysis,
                             std::unique_ptr<Sequential> synthesis)
    : name_(std::move(name)), M_(latent_channels), analysis_(std::move(analysis)), synthesis_(std::move(synthesis)) {}

namespace {

void check_image(const Shape& s) {
    if (s.c != 3 || s.h < 1 || s.w < 1 || s.h % kImageAlign != 0 || s.w % kImageAlign != 0)
        throw ContractError("analyze: expected [3,H,W] with H and W multiples of 64, got " + s.str());
}

}  // namespace

Tensor TransformPair::analyze(const Tensor& x) const {
    check_image(x.shape());
    return analysis_->forward(x);
}

void TransformPair::check_latent(const Tensor& y) const {
    if (y.channels() != M_) throw ContractError("synthesize: latent has " + std::to_string(y.channels()) +
                                                " channels, transform expects " + std::to_string(M_));
}

Tensor TransformPair::synthesize(const Tensor& y_hat) const {
    check_latent(y_hat);
    Tensor x = synthesis_->forward(y_hat);
    for (float& v : x.values()) v = std::clamp(v, 0.0f, 1.0f);
    return x;
}

Tensor TransformPair::analyze_train(const Tensor& x) {
    check_image(x.shape());
    return analysis_->forward_train(x);
}

Tensor TransformPair::analyze_backward(const Tensor& grad_y) { return analysis_->backward(grad_y); }

Tensor TransformPair::synthesize_train(const Tensor& y_hat) {
    check_latent(y_hat);
    return synthesis_->forward_train(y_hat);
}

Tensor TransformPair::synthesize_backward(const Tensor& grad_x) { return synthesis_->backward(grad_x); }

std::size_t TransformPair::parameter_count() const {
    std::vector<const nn::Param*> p;
    collect(p);
    return count(p);
}

void TransformPair::collect(nn::ParamList& out) {
    analysis_->collect(out);
    synthesis_->collect(out);
}

void TransformPair::collect(std::vector<const nn::Param*>& out) const {
    analysis_->collect(out);
    synthesis_->collect(out);
}

std::uint64_t TransformPair::macs(int height, int width, std::vector<std::string>& uncounted) const {
    const Shape image{3, height, width};
    const Shape latent = analysis_->output_shape(image);
    return analysis_->count_macs(image, uncounted) + synthesis_->count_macs(latent, uncounted);
}

// ------------------------------------------------------------- HyperPair

HyperPair::HyperPair(int latent_channels, int hyper_channels, std::uint64_t seed)
    : M_(latent_channels), N_(hyper_channels) {
    if (M_ < 2 || M_ % 2 != 0) throw ConfigError("hyper pair: latent channels must be even");
    Rng rng(seed ^ 0x68797065725f7061ULL);
    ha_.add<Conv2d>("h_a.0", M_, N_, 3, 1, 1, rng);
    ha_.add<Relu>();
    ha_.add<Conv2d>("h_a.2", N_, N_, 5, 2, 2, rng);
    ha_.add<Relu>();
    ha_.add<Conv2d>("h_a.4", N_, N_, 5, 2, 2, rng);

    const int mid = 3 * M_ / 2;
    hs_.add<ConvTranspose2d>("h_s.0", N_, M_, 5, 2, 2, 1, rng);
    hs_.add<Relu>();
    hs_.add<ConvTranspose2d>("h_s.2", M_, mid, 5, 2, 2, 1, rng);
    hs_.add<Relu>();
    hs_.add<Conv2d>("h_s.4", mid, 2 * M_, 3, 1, 1, rng);
}

void HyperPair::check_latent(const Tensor& y) const {
    if (y.channels() != M_)
        throw ContractError("hyper_analyze: latent has " + std::to_string(y.channels()) + " channels, expected " +
                            std::to_string(M_));
    if (y.height() % kHyperStride != 0 || y.width() % kHyperStride != 0)
        throw ContractError("hyper_analyze: latent spatial size must be a multiple of 4");
}

void HyperPair::check_hyper(const Tensor& z) const {
    if (z.channels() != N_)
        throw ContractError("hyper_synthesize: expected " + std::to_string(N_) + " channels, got " +
                            std::to_string(z.channels()));
}

Tensor HyperPair::hyper_analyze(const Tensor& y) const {
    check_latent(y);
    return ha_.forward(y);
}

Tensor HyperPair::hyper_synthesize(const Tensor& z_hat) const {
    check_hyper(z_hat);
    return hs_.forward(z_hat);
}

Tensor HyperPair::hyper_analyze_train(const Tensor& y) {
    check_latent(y);
    return ha_.forward_train(y);
}

Tensor HyperPair::hyper_analyze_backward(const Tensor& grad_z) { return ha_.backward(grad_z); }

Tensor HyperPair::hyper_synthesize_train(const Tensor& z_hat) {
    check_hyper(z_hat);
    return hs_.forward_train(z_hat);
}

Tensor HyperPair::hyper_synthesize_backward(const Tensor& grad_features) { return hs_.backward(grad_features); }

std::size_t HyperPair::parameter_count() const {
    std::vector<const nn::Param*> p;
    collect(p);
    return count(p);
}

void HyperPair::collect(nn::ParamList& out) {
    ha_.collect(out);
    hs_.collect(out);
}

void HyperPair::collect(std::vector<const nn::Param*>& out) const {
    ha_.collect(out);
    hs_.collect(out);
}

std::uint64_t HyperPair::macs(int latent_h, int latent_w, std::vector<std::string>& uncounted) const {
    const Shape y{M_, latent_h, latent_w};
    return ha_.count_macs(y, uncounted) + hs_.count_macs(ha_.output_shape(y), uncounted);
}

// ------------------------------------------------------------ transforms

std::unique_ptr<TransformPair> make_baseline_conv(const TransformConfig& c) {
    require_positive(c);
    Rng rng(c.seed);
    auto ga = std::make_unique<Sequential>();
    ga->add<Conv2d>("g_a.0", 3, c.width, 5, 2, 2, rng);
    ga->add<Gdn>("g_a.1", c.width, false);
    ga->add<Conv2d>("g_a.2", c.width, c.width, 5, 2, 2, rng);
    ga->add<Gdn>("g_a.3", c.width, false);
    ga->add<Conv2d>("g_a.4", c.width, c.width, 5, 2, 2, rng);
    ga->add<Gdn>("g_a.5", c.width, false);
    ga->add<Conv2d>("g_a.6", c.width, c.M, 5, 2, 2, rng);

    auto gs = std::make_unique<Sequential>();
    gs->add<ConvTranspose2d>("g_s.0", c.M, c.width, 5, 2, 2, 1, rng);
    gs->add<Gdn>("g_s.1", c.width, true);
    gs->add<ConvTranspose2d>("g_s.2", c.width, c.width, 5, 2, 2, 1, rng);
    gs->add<Gdn>("g_s.3", c.width, true);
    gs->add<ConvTranspose2d>("g_s.4", c.width, c.width, 5, 2, 2, 1, rng);
    gs->add<Gdn>("g_s.5", c.width, true);
    gs->add<ConvTranspose2d>("g_s.6", c.width, 3, 5, 2, 2, 1, rng);
    return std::make_unique<TransformPair>("baseline_conv", c.M, std::move(ga), std::move(gs));
}

std::unique_ptr<TransformPair> make_gated_block(const TransformConfig& c) {
    require_positive(c);
    Rng rng(c.seed);
    auto ga = std::make_unique<Sequential>();
    int in = 3;
    for (int stage = 0; stage < 4; ++stage) {
        const int out = stage == 3 ? c.M : c.width;
        const std::string prefix = "g_a." + std::to_string(stage);
        ga->add<Conv2d>(prefix + ".down", in, out, 2, 2, 0, rng);
        if (stage < 3)
            for (int b = 0; b < c.blocks; ++b) ga->add<GatedBlock>(prefix + ".block" + std::to_string(b), out, rng);
        in = out;
    }

    auto gs = std::make_unique<Sequential>();
    in = c.M;
    for (int stage = 0; stage < 4; ++stage) {
        const int out = stage == 3 ? 3 : c.width;
        const std::string prefix = "g_s." + std::to_string(stage);
        gs->add<ConvTranspose2d>(prefix + ".up", in, out, 2, 2, 0, 0, rng);
        if (stage < 3)
            for (int b = 0; b < c.blocks; ++b) gs->add<GatedBlock>(prefix + ".block" + std::to_string(b), out, rng);
        in = out;
    }
    return std::make_unique<TransformPair>("gated_block", c.M, std::move(ga), std::move(gs));
}

// -------------------------------------------------------------- registry

TransformRegistry& TransformRegistry::global() {
    static TransformRegistry registry = [] {
        TransformRegistry r;
        r.register_transform("baseline_conv", make_baseline_conv);
        r.register_transform("gated_block", make_gated_block);
        r.register_transform("dcnv4", [](const TransformConfig&) -> std::unique_ptr<TransformPair> {
            throw ConfigError("dcnv4: deformable convolution transform is not available in this build");
        });
        return r;
    }();
    return registry;
}

void TransformRegistry::register_transform(const std::string& name, TransformBuilder builder) {
    if (name.empty()) throw ConfigError("transform registry: empty name");
    if (!builders_.emplace(name, std::move(builder)).second)
        throw ConfigError("transform registry: '" + name + "' is already registered");
}

std::vector<std::string> TransformRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : builders_) out.push_back(name);
    return out;
}

BuiltTransforms TransformRegistry::build(const std::string& name, const TransformConfig& config) const {
    const auto it = builders_.find(name);
    if (it == builders_.end()) throw LookupError("unknown transform '" + name + "'");
    BuiltTransforms built;
    built.transform = it->second(config);
    if (!built.transform || built.transform->latent_channels() != config.M)
        throw ConfigError("transform '" + name + "' did not honour the configured latent width");
    built.hyper = std::make_unique<HyperPair>(config.M, config.N, config.seed);
    return built;
}

std::vector<BudgetRow> budget_report(const TransformRegistry& registry, const std::vector<std::string>& names,
                                     const TransformConfig& config, std::size_t target_params, double tolerance) {
    if (target_params == 0) throw ContractError("budget_report: target must be positive");
    std::vector<BudgetRow> rows;
    for (const std::string& name : names) {
        BudgetRow row;
        row.name = name;
        try {
            const BuiltTransforms built = registry.build(name, config);
            row.params = built.transform->parameter_count() + built.hyper->parameter_count();
            row.deviation = (static_cast<double>(*row.params) - static_cast<double>(target_params)) /
                            static_cast<double>(target_params);
            row.flagged = std::fabs(row.deviation) > tolerance;
        } catch (const ConfigError& e) {
            row.flagged = true;
            row.note = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace rdcl::transforms
