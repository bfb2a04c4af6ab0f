#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rdcl/core/tensor.hpp"
#include "rdcl/entropy/gaussian.hpp"
#include "rdcl/nn/layers.hpp"

namespace rdcl::context {

enum class ContextKind : std::uint8_t { hyperprior = 0, checkerboard = 1, charm = 2, scctx = 3 };

std::string to_string(ContextKind kind);
/// Throws ConfigError for unknown names.
ContextKind parse_context_kind(const std::string& name);

enum class SpatialPass : std::uint8_t { all, anchor, non_anchor };

/// Anchors sit where (row + column) is even.
inline bool is_anchor(int y, int x) { return ((y + x) & 1) == 0; }
inline bool in_pass(SpatialPass pass, int y, int x) {
    return pass == SpatialPass::all || (pass == SpatialPass::anchor) == is_anchor(y, x);
}

struct CheckerboardMasks {
    Tensor anchor;      // [1,H,W], 1 at anchors
    Tensor non_anchor;  // [1,H,W], 1 elsewhere
};
CheckerboardMasks checkerboard_masks(int height, int width);

/// `n_slices` groups as equal as possible; the first M % n_slices groups
/// are one channel wider. Throws ConfigError when M < n_slices.
std::vector<int> charm_groups(int M, int n_slices = 10);

/// [g, g, 2g, 4g, M - 8g] with g = M/20 rounded to a multiple of 8.
/// Throws ConfigError when g would be 0 or the remainder empty.
std::vector<int> scctx_groups(int M);

struct CodingUnit {
    int group = 0;
    int c_begin = 0;
    int c_end = 0;
    SpatialPass pass = SpatialPass::all;

    int channels() const { return c_end - c_begin; }
};

/// Encode and decode order of the latent y.
struct CodingSchedule {
    std::vector<CodingUnit> units;
    std::vector<int> group_sizes;

    /// Throws ContractError unless the units partition [0, M) x positions
    /// with anchors before non-anchors inside each group.
    void validate(int M) const;
};

CodingSchedule make_schedule(ContextKind kind, int M);

struct ContextConfig {
    ContextKind kind = ContextKind::hyperprior;
    int M = 192;
    int hidden = 0;  // parameter-net width; 0 selects M
    int kernel = 3;  // parameter-net kernel size
    std::uint64_t seed = 0;
};

/// Mean and (clamped) scale for the channels of one coding unit, at every
/// spatial position; only the unit's own positions are meaningful.
struct UnitParams {
    Tensor mu;
    Tensor sigma;
};

/// Predicts the conditional Gaussian of y from hyper features [2M,h,w] and
/// the parts of y_hat decoded before each unit.
class ContextModel {
public:
    explicit ContextModel(const ContextConfig& config);
    ~ContextModel();
    ContextModel(ContextModel&&) noexcept;
    ContextModel& operator=(ContextModel&&) noexcept;

    ContextKind kind() const { return config_.kind; }
    const ContextConfig& config() const { return config_; }
    int latent_channels() const { return config_.M; }
    int hidden() const { return hidden_; }
    const CodingSchedule& schedule() const { return schedule_; }

    /// Parameters for unit `u`. Only channels before the unit and, for a
    /// non-anchor pass, the anchors of the unit's own channels are read from
    /// y_hat; everything else is ignored.
    UnitParams predict_unit(std::size_t u, const Tensor& features, const Tensor& y_hat) const;

    /// Maps a latent value to its training-time reconstruction given the
    /// predicted mean; `index` is the flat [M,h,w] element index.
    using Quantizer = std::function<float(float value, float mu, std::size_t index)>;

    struct TrainForward {
        entropy::EntropyParams params;  // mu and raw (unclamped) scale
        Tensor y_hat;
    };

    /// Training pass in schedule order: each unit's parameters come from the
    /// reconstructions of earlier units, then its own elements go through
    /// `quantize`.
    TrainForward forward_train(const Tensor& features, const Tensor& y, const Quantizer& quantize);
    /// Gradients of the loss w.r.t. the outputs of forward_train; accumulates
    /// into d_features and d_y_hat.
    void backward(const Tensor& d_mu, const Tensor& d_sigma, Tensor& d_features, Tensor& d_y_hat);

    std::size_t parameter_count() const;
    void collect(nn::ParamList& out);
    void collect(std::vector<const nn::Param*>& out) const;
    std::uint64_t macs(int latent_h, int latent_w, std::vector<std::string>& uncounted) const;

    /// Per-unit parameter net and optional in-group spatial context conv;
    /// empty for the hyperprior kind. Exposed for the serial reference.
    const nn::Sequential* unit_net(std::size_t u) const;
    const nn::Conv2d* unit_context(std::size_t u) const;

private:
    struct Unit;
    Tensor assemble(std::size_t u, const Tensor& features, const Tensor& y_hat, const Tensor* spatial) const;
    void check_inputs(const Tensor& features, const Tensor& y_hat) const;

    ContextConfig config_;
    int hidden_ = 0;
    CodingSchedule schedule_;
    std::vector<std::unique_ptr<Unit>> units_;
};

/// Parameter count of the per-unit nets for a kind at a given hidden width.
std::size_t context_param_count(ContextKind kind, int M, int hidden, int kernel);

/// Hidden width for scctx whose parameter count is closest to that of
/// charm at `charm_hidden`.
int matched_scctx_hidden(int M, int charm_hidden, int kernel);

struct LatentCoding {
    std::vector<std::vector<std::uint8_t>> segments;  // one per coding unit
    std::vector<std::int32_t> symbols;                // [M,h,w] order
    Tensor y_hat;                                     // in the gained domain
    entropy::EntropyParams params;                    // mu and clamped sigma used per element
};

/// Codes the gained latent unit by unit: each element becomes
/// round(y - mu) under a Gaussian table picked by its sigma.
LatentCoding encode_scaled(const ContextModel& model, const Tensor& y_scaled, const Tensor& features);
/// Mirror of encode_scaled. Throws DecodeError(Truncated) naming the first
/// missing unit when there are too few segments.
Tensor decode_scaled(const ContextModel& model, std::span<const std::vector<std::uint8_t>> segments,
                     const Tensor& features);

/// Gain-aware wrappers: y is scaled by `gain` before coding and y_hat is
/// returned divided by it.
LatentCoding encode_latent(const ContextModel& model, const Tensor& y, const Tensor& features, double gain);
Tensor decode_latent(const ContextModel& model, std::span<const std::vector<std::uint8_t>> segments,
                     const Tensor& features, double gain);

/// Decoder that evaluates every parameter net one output position at a
/// time with naive loops and decodes element by element. Slow; used to
/// check the batched decoder bit for bit.
Tensor serial_reference_decode(const ContextModel& model, std::span<const std::vector<std::uint8_t>> segments,
                               const Tensor& features);

/// Header byte: context kind in the high nibble, FNV-1a of the transform
/// name in the low nibble.
std::uint8_t model_id(ContextKind kind, const std::string& transform_name);

}  // namespace rdcl::context
