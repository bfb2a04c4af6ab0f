#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rdcl/core/tensor.hpp"
#include "rdcl/nn/layers.hpp"

namespace rdcl::transforms {

/// Image side lengths must be multiples of this before analysis.
inline constexpr int kImageAlign = 64;
inline constexpr int kLatentStride = 16;
inline constexpr int kHyperStride = 4;

struct TransformConfig {
    int M = 192;      // latent channels
    int N = 128;      // hyper-latent channels
    int width = 128;  // hidden width of analysis and synthesis stacks
    int blocks = 1;   // gated blocks per stage (gated_block only)
    std::uint64_t seed = 0;

    bool operator==(const TransformConfig&) const = default;
};

/// Analysis g_a: image [3,H,W] -> y [M,H/16,W/16]; synthesis g_s back.
class TransformPair {
public:
    TransformPair(std::string name, int latent_channels, std::unique_ptr<nn::Sequential> analysis,
                  std::unique_ptr<nn::Sequential> synthesis);

    const std::string& name() const { return name_; }
    int latent_channels() const { return M_; }

    /// Throws ContractError unless x is [3,H,W] with H, W multiples of 64.
    Tensor analyze(const Tensor& x) const;
    /// Reconstruction clamped to [0,1].
    Tensor synthesize(const Tensor& y_hat) const;

    Tensor analyze_train(const Tensor& x);
    Tensor analyze_backward(const Tensor& grad_y);
    /// Unclamped reconstruction for the distortion term.
    Tensor synthesize_train(const Tensor& y_hat);
    Tensor synthesize_backward(const Tensor& grad_x);

    std::size_t parameter_count() const;
    void collect(nn::ParamList& out);
    void collect(std::vector<const nn::Param*>& out) const;
    /// Analysis plus synthesis MACs for an image of the given size.
    std::uint64_t macs(int height, int width, std::vector<std::string>& uncounted) const;

    const nn::Sequential& analysis() const { return *analysis_; }
    const nn::Sequential& synthesis() const { return *synthesis_; }

private:
    void check_latent(const Tensor& y) const;

    std::string name_;
    int M_;
    std::unique_ptr<nn::Sequential> analysis_, synthesis_;
};

/// Hyper analysis h_a: y [M,h,w] -> z [N,h/4,w/4]; hyper synthesis h_s:
/// z_hat -> features [2M,h,w] consumed by the context model.
class HyperPair {
public:
    HyperPair(int latent_channels, int hyper_channels, std::uint64_t seed);

    int latent_channels() const { return M_; }
    int hyper_channels() const { return N_; }
    int feature_channels() const { return 2 * M_; }

    Tensor hyper_analyze(const Tensor& y) const;
    Tensor hyper_synthesize(const Tensor& z_hat) const;

    Tensor hyper_analyze_train(const Tensor& y);
    Tensor hyper_analyze_backward(const Tensor& grad_z);
    Tensor hyper_synthesize_train(const Tensor& z_hat);
    Tensor hyper_synthesize_backward(const Tensor& grad_features);

    std::size_t parameter_count() const;
    void collect(nn::ParamList& out);
    void collect(std::vector<const nn::Param*>& out) const;
    /// MACs for a latent of spatial size h x w.
    std::uint64_t macs(int latent_h, int latent_w, std::vector<std::string>& uncounted) const;

private:
    void check_latent(const Tensor& y) const;
    void check_hyper(const Tensor& z) const;

    int M_, N_;
    nn::Sequential ha_, hs_;
};

struct BuiltTransforms {
    std::unique_ptr<TransformPair> transform;
    std::unique_ptr<HyperPair> hyper;
};

using TransformBuilder = std::function<std::unique_ptr<TransformPair>(const TransformConfig&)>;

/// Name -> constructor map for transform pairs. Every entry shares the same
/// hyper pair design so context models see identical feature layouts.
class TransformRegistry {
public:
    /// Registry preloaded with baseline_conv, gated_block and dcnv4.
    static TransformRegistry& global();

    /// Throws ConfigError if the name is taken.
    void register_transform(const std::string& name, TransformBuilder builder);
    bool contains(const std::string& name) const { return builders_.count(name) != 0; }
    std::vector<std::string> names() const;

    /// Throws LookupError for unknown names.
    BuiltTransforms build(const std::string& name, const TransformConfig& config) const;

private:
    std::map<std::string, TransformBuilder> builders_;
};

struct BudgetRow {
    std::string name;
    std::optional<std::size_t> params;  // empty when the entry could not be built
    double deviation = 0.0;             // (params - target) / target
    bool flagged = false;
    std::string note;
};

/// Parameter count of transform plus hyper pair for each name, flagging
/// entries more than `tolerance` (relative) away from `target_params`.
std::vector<BudgetRow> budget_report(const TransformRegistry& registry, const std::vector<std::string>& names,
                                     const TransformConfig& config, std::size_t target_params, double tolerance);

std::unique_ptr<TransformPair> make_baseline_conv(const TransformConfig& config);
std::unique_ptr<TransformPair> make_gated_block(const TransformConfig& config);

}  // namespace rdcl::transforms
