#include "rdcl/context_models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "rdcl/entropy/cdf_table.hpp"
#include "rdcl/entropy/range_coder.hpp"
#include "rdcl/rate_control.hpp"

namespace rdcl::context {

using entropy::ScaleTableBank;
using nn::Conv2d;
using nn::Relu;
using nn::Sequential;

namespace {

constexpr int kContextKernel = 5;
const float kSigmaFloor = static_cast<float>(entropy::kSigmaMin);

inline float clamp_scale(float t) { return t < kSigmaFloor ? kSigmaFloor : t; }

// Group channels with non-anchors zeroed. Zeros are written, not produced by
// multiplication, so the serial reference sees the same bits.
Tensor anchor_only(const Tensor& y_hat, int c_begin, int c_end) {
    Tensor out(c_end - c_begin, y_hat.height(), y_hat.width());
    for (int c = c_begin; c < c_end; ++c)
        for (int y = 0; y < y_hat.height(); ++y)
            for (int x = 0; x < y_hat.width(); ++x)
                out.at(c - c_begin, y, x) = is_anchor(y, x) ? y_hat.at(c, y, x) : 0.0f;
    return out;
}

std::size_t conv_params(int in, int out, int k) { return static_cast<std::size_t>(k) * k * in * out + out; }

std::size_t unit_net_params(int in, int hidden, int out, int k) {
    return conv_params(in, hidden, k) + conv_params(hidden, hidden, k) + conv_params(hidden, out, k);
}

}  // namespace

std::string to_string(ContextKind kind) {
    switch (kind) {
        case ContextKind::hyperprior: return "hyperprior";
        case ContextKind::checkerboard: return "checkerboard";
        case ContextKind::charm: return "charm";
        case ContextKind::scctx: return "scctx";
    }
    return "unknown";
}

ContextKind parse_context_kind(const std::string& name) {
    for (ContextKind k : {ContextKind::hyperprior, ContextKind::checkerboard, ContextKind::charm, ContextKind::scctx})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown context model '" + name + "' (expected hyperprior, checkerboard, charm or scctx)");
}

CheckerboardMasks checkerboard_masks(int height, int width) {
    if (height < 1 || width < 1) throw ContractError("checkerboard_masks: dimensions must be positive");
    CheckerboardMasks m{Tensor(1, height, width), Tensor(1, height, width)};
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) (is_anchor(y, x) ? m.anchor : m.non_anchor).at(0, y, x) = 1.0f;
    return m;
}

std::vector<int> charm_groups(int M, int n_slices) {
    if (n_slices < 1 || M < n_slices)
        throw ConfigError("charm_groups: need at least one channel per slice (M=" + std::to_string(M) +
                          ", slices=" + std::to_string(n_slices) + ")");
    std::vector<int> sizes(n_slices, M / n_slices);
    for (int i = 0; i < M % n_slices; ++i) ++sizes[i];
    return sizes;
}

std::vector<int> scctx_groups(int M) {
    const int g = static_cast<int>(std::lround(M / 20.0 / 8.0)) * 8;
    if (g == 0 || M - 8 * g <= 0)
        throw ConfigError("scctx_groups: M=" + std::to_string(M) + " is too small for the doubling rule");
    return {g, g, 2 * g, 4 * g, M - 8 * g};
}

void CodingSchedule::validate(int M) const {
    int sum = 0;
    for (int s : group_sizes) {
        if (s < 1) throw ContractError("schedule: empty channel group");
        sum += s;
    }
    if (sum != M) throw ContractError("schedule: groups do not partition the latent channels");
    std::vector<int> begin(group_sizes.size() + 1, 0);
    for (std::size_t g = 0; g < group_sizes.size(); ++g) begin[g + 1] = begin[g] + group_sizes[g];
    std::vector<int> seen(group_sizes.size(), 0);  // bit 0 all, 1 anchor, 2 non-anchor
    for (const CodingUnit& u : units) {
        if (u.group < 0 || u.group >= static_cast<int>(group_sizes.size()) || u.c_begin != begin[u.group] ||
            u.c_end != begin[u.group + 1])
            throw ContractError("schedule: unit channel range does not match its group");
        int& s = seen[u.group];
        const int bit = u.pass == SpatialPass::all ? 1 : (u.pass == SpatialPass::anchor ? 2 : 4);
        if (s & bit) throw ContractError("schedule: pass listed twice for a group");
        if (u.pass == SpatialPass::non_anchor && !(s & 2)) throw ContractError("schedule: non-anchor before anchor");
        if (u.pass == SpatialPass::all && s) throw ContractError("schedule: group mixes full and split passes");
        s |= bit;
    }
    for (int s : seen)
        if (s != 1 && s != 6) throw ContractError("schedule: group not fully covered");
}

CodingSchedule make_schedule(ContextKind kind, int M) {
    CodingSchedule s;
    switch (kind) {
        case ContextKind::hyperprior:
        case ContextKind::checkerboard: s.group_sizes = {M}; break;
        case ContextKind::charm: s.group_sizes = charm_groups(M); break;
        case ContextKind::scctx: s.group_sizes = scctx_groups(M); break;
    }
    const bool split = kind == ContextKind::checkerboard || kind == ContextKind::scctx;
    int begin = 0;
    for (std::size_t g = 0; g < s.group_sizes.size(); ++g) {
        const int end = begin + s.group_sizes[g];
        if (split) {
            s.units.push_back({static_cast<int>(g), begin, end, SpatialPass::anchor});
            s.units.push_back({static_cast<int>(g), begin, end, SpatialPass::non_anchor});
        } else {
            s.units.push_back({static_cast<int>(g), begin, end, SpatialPass::all});
        }
        begin = end;
    }
    s.validate(M);
    return s;
}

// ----------------------------------------------------------------- model

struct ContextModel::Unit {
    int prev = 0;  // earlier-group channels fed as context
    std::unique_ptr<Conv2d> ctx;
    std::unique_ptr<Sequential> net;
    std::vector<const Tensor*> parts;
};

std::size_t context_param_count(ContextKind kind, int M, int hidden, int kernel) {
    if (kind == ContextKind::hyperprior) return 0;
    const CodingSchedule s = make_schedule(kind, M);
    std::size_t total = 0;
    for (const CodingUnit& u : s.units) {
        const int ch = u.channels();
        int in = 2 * M + u.c_begin;
        if (u.pass == SpatialPass::non_anchor) {
            total += conv_params(ch, 2 * ch, kContextKernel);
            in += 2 * ch;
        }
        total += unit_net_params(in, hidden, 2 * ch, kernel);
    }
    return total;
}

int matched_scctx_hidden(int M, int charm_hidden, int kernel) {
    const auto target = static_cast<double>(context_param_count(ContextKind::charm, M, charm_hidden, kernel));
    int best = 1;
    double best_gap = INFINITY;
    for (int h = 1; h <= 4 * charm_hidden + 8; ++h) {
        const double gap = std::fabs(static_cast<double>(context_param_count(ContextKind::scctx, M, h, kernel)) - target);
        if (gap < best_gap) {
            best_gap = gap;
            best = h;
        }
    }
    return best;
}

ContextModel::ContextModel(const ContextConfig& config) : config_(config) {
    if (config_.M < 2) throw ConfigError("context model: M must be at least 2");
    if (config_.kernel < 1 || config_.kernel % 2 == 0) throw ConfigError("context model: kernel must be odd");
    schedule_ = make_schedule(config_.kind, config_.M);
    hidden_ = config_.hidden > 0 ? config_.hidden : config_.M;
    if (config_.kind == ContextKind::scctx) hidden_ = matched_scctx_hidden(config_.M, hidden_, config_.kernel);
    if (config_.kind == ContextKind::hyperprior) return;

    Rng rng(config_.seed ^ 0x636f6e7465787473ULL);
    const int k = config_.kernel, pad = k / 2;
    for (std::size_t i = 0; i < schedule_.units.size(); ++i) {
        const CodingUnit& cu = schedule_.units[i];
        const int ch = cu.channels();
        const std::string prefix = "ctx.u" + std::to_string(i);
        auto unit = std::make_unique<Unit>();
        unit->prev = cu.c_begin;
        int in = 2 * config_.M + unit->prev;
        if (cu.pass == SpatialPass::non_anchor) {
            unit->ctx = std::make_unique<Conv2d>(prefix + ".spatial", ch, 2 * ch, kContextKernel, 1, kContextKernel / 2, rng);
            in += 2 * ch;
        }
        unit->net = std::make_unique<Sequential>();
        unit->net->add<Conv2d>(prefix + ".net.0", in, hidden_, k, 1, pad, rng);
        unit->net->add<Relu>();
        unit->net->add<Conv2d>(prefix + ".net.2", hidden_, hidden_, k, 1, pad, rng);
        unit->net->add<Relu>();
        unit->net->add<Conv2d>(prefix + ".net.4", hidden_, 2 * ch, k, 1, pad, rng);
        units_.push_back(std::move(unit));
    }
}

ContextModel::~ContextModel() = default;
ContextModel::ContextModel(ContextModel&&) noexcept = default;
ContextModel& ContextModel::operator=(ContextModel&&) noexcept = default;

const Sequential* ContextModel::unit_net(std::size_t u) const { return u < units_.size() ? units_[u]->net.get() : nullptr; }
const Conv2d* ContextModel::unit_context(std::size_t u) const { return u < units_.size() ? units_[u]->ctx.get() : nullptr; }

void ContextModel::check_inputs(const Tensor& features, const Tensor& y_hat) const {
    const int M = config_.M;
    if (features.channels() != 2 * M)
        throw ContractError("context model: features have " + std::to_string(features.channels()) +
                            " channels, expected " + std::to_string(2 * M));
    if (y_hat.channels() != M || y_hat.height() != features.height() || y_hat.width() != features.width())
        throw ContractError("context model: latent " + y_hat.shape().str() + " does not match features " +
                            features.shape().str());
}

Tensor ContextModel::assemble(std::size_t u, const Tensor& features, const Tensor& y_hat, const Tensor* spatial) const {
    const Unit& unit = *units_[u];
    Tensor prev;
    std::vector<const Tensor*> parts{&features};
    if (unit.prev > 0) {
        prev = y_hat.slice_channels(0, unit.prev);
        parts.push_back(&prev);
    }
    if (spatial) parts.push_back(spatial);
    return concat_channels(parts);
}

UnitParams ContextModel::predict_unit(std::size_t u, const Tensor& features, const Tensor& y_hat) const {
    if (u >= schedule_.units.size()) throw ContractError("predict_unit: unit index out of range");
    check_inputs(features, y_hat);
    const int M = config_.M;
    const CodingUnit& cu = schedule_.units[u];
    UnitParams p;
    Tensor out;
    if (config_.kind == ContextKind::hyperprior) {
        out = features;
    } else {
        const Unit& unit = *units_[u];
        Tensor spatial;
        if (unit.ctx) spatial = unit.ctx->forward(anchor_only(y_hat, cu.c_begin, cu.c_end));
        out = unit.net->forward(assemble(u, features, y_hat, unit.ctx ? &spatial : nullptr));
    }
    const int ch = config_.kind == ContextKind::hyperprior ? M : cu.channels();
    p.mu = out.slice_channels(0, ch);
    p.sigma = out.slice_channels(ch, 2 * ch);
    for (float& v : p.sigma.values()) v = clamp_scale(v);
    return p;
}

ContextModel::TrainForward ContextModel::forward_train(const Tensor& features, const Tensor& y,
                                                       const Quantizer& quantize) {
    check_inputs(features, y);
    const int M = config_.M;
    const int h = y.height(), w = y.width();
    TrainForward out{entropy::EntropyParams(y.shape()), Tensor(y.shape())};
    if (config_.kind == ContextKind::hyperprior) {
        out.params = {features.slice_channels(0, M), features.slice_channels(M, 2 * M)};
        for (std::size_t i = 0; i < y.size(); ++i) out.y_hat[i] = quantize(y[i], out.params.mu[i], i);
        return out;
    }
    for (std::size_t u = 0; u < units_.size(); ++u) {
        const CodingUnit& cu = schedule_.units[u];
        Unit& unit = *units_[u];
        Tensor spatial;
        if (unit.ctx) spatial = unit.ctx->forward_train(anchor_only(out.y_hat, cu.c_begin, cu.c_end));
        const Tensor net_out = unit.net->forward_train(assemble(u, features, out.y_hat, unit.ctx ? &spatial : nullptr));
        const int ch = cu.channels();
        for (int c = 0; c < ch; ++c)
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx) {
                    if (!in_pass(cu.pass, yy, xx)) continue;
                    const int cc = cu.c_begin + c;
                    const float mu = net_out.at(c, yy, xx);
                    out.params.mu.at(cc, yy, xx) = mu;
                    out.params.sigma.at(cc, yy, xx) = net_out.at(ch + c, yy, xx);
                    const std::size_t idx = (static_cast<std::size_t>(cc) * h + yy) * w + xx;
                    out.y_hat[idx] = quantize(y[idx], mu, idx);
                }
    }
    return out;
}

void ContextModel::backward(const Tensor& d_mu, const Tensor& d_sigma, Tensor& d_features, Tensor& d_y_hat) {
    const int M = config_.M;
    if (config_.kind == ContextKind::hyperprior) {
        d_features.add_channels(0, d_mu);
        d_features.add_channels(M, d_sigma);
        return;
    }
    const int h = d_mu.height(), w = d_mu.width();
    for (std::size_t i = units_.size(); i-- > 0;) {
        const CodingUnit& cu = schedule_.units[i];
        Unit& unit = *units_[i];
        const int ch = cu.channels();
        Tensor d_out(2 * ch, h, w);
        for (int c = 0; c < ch; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (!in_pass(cu.pass, y, x)) continue;
                    d_out.at(c, y, x) = d_mu.at(cu.c_begin + c, y, x);
                    d_out.at(ch + c, y, x) = d_sigma.at(cu.c_begin + c, y, x);
                }
        const Tensor d_in = unit.net->backward(d_out);
        d_features.add_channels(0, d_in.slice_channels(0, 2 * M));
        int at = 2 * M;
        if (unit.prev > 0) {
            d_y_hat.add_channels(0, d_in.slice_channels(at, at + unit.prev));
            at += unit.prev;
        }
        if (unit.ctx) {
            Tensor d_masked = unit.ctx->backward(d_in.slice_channels(at, at + 2 * ch));
            for (int c = 0; c < ch; ++c)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        if (is_anchor(y, x)) d_y_hat.at(cu.c_begin + c, y, x) += d_masked.at(c, y, x);
        }
    }
}

std::size_t ContextModel::parameter_count() const {
    std::vector<const nn::Param*> p;
    collect(p);
    std::size_t n = 0;
    for (const nn::Param* q : p) n += q->size();
    return n;
}

void ContextModel::collect(nn::ParamList& out) {
    for (auto& u : units_) {
        if (u->ctx) u->ctx->collect(out);
        u->net->collect(out);
    }
}

void ContextModel::collect(std::vector<const nn::Param*>& out) const {
    for (const auto& u : units_) {
        if (u->ctx) u->ctx->collect(out);
        u->net->collect(out);
    }
}

std::uint64_t ContextModel::macs(int latent_h, int latent_w, std::vector<std::string>& uncounted) const {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < units_.size(); ++i) {
        const Unit& u = *units_[i];
        const CodingUnit& cu = schedule_.units[i];
        int in = 2 * config_.M + u.prev;
        if (u.ctx) {
            total += *u.ctx->macs({cu.channels(), latent_h, latent_w});
            in += 2 * cu.channels();
        }
        total += u.net->count_macs({in, latent_h, latent_w}, uncounted);
    }
    return total;
}

// ---------------------------------------------------------------- coding

namespace {

void check_segment_count(const ContextModel& model, std::size_t have) {
    const auto& units = model.schedule().units;
    if (have < units.size()) {
        const CodingUnit& u = units[have];
        throw DecodeError(DecodeError::Kind::Truncated,
                          "missing segment for coding unit " + std::to_string(have) + " (channels " +
                              std::to_string(u.c_begin) + "-" + std::to_string(u.c_end - 1) + ")");
    }
    if (have > units.size())
        throw DecodeError(DecodeError::Kind::Corrupt, "stream has more segments than the coding schedule");
}

}  // namespace

LatentCoding encode_scaled(const ContextModel& model, const Tensor& y_scaled, const Tensor& features) {
    const auto& bank = ScaleTableBank::standard();
    const auto& units = model.schedule().units;
    const int h = y_scaled.height(), w = y_scaled.width();
    LatentCoding out;
    out.y_hat = Tensor(y_scaled.shape());
    out.symbols.assign(y_scaled.size(), 0);
    out.params = entropy::EntropyParams(y_scaled.shape());
    for (std::size_t u = 0; u < units.size(); ++u) {
        const CodingUnit& cu = units[u];
        const UnitParams p = model.predict_unit(u, features, out.y_hat);
        entropy::RangeEncoder enc;
        for (int c = cu.c_begin; c < cu.c_end; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (!in_pass(cu.pass, y, x)) continue;
                    const float mu = p.mu.at(c - cu.c_begin, y, x);
                    const float sigma = p.sigma.at(c - cu.c_begin, y, x);
                    const std::int32_t s = rate::center_symbol(y_scaled.at(c, y, x), mu);
                    enc.encode(s, bank.table(bank.index_for(sigma)));
                    out.symbols[(static_cast<std::size_t>(c) * h + y) * w + x] = s;
                    out.y_hat.at(c, y, x) = rate::dequantize_one(s, mu);
                    out.params.mu.at(c, y, x) = mu;
                    out.params.sigma.at(c, y, x) = sigma;
                }
        out.segments.push_back(enc.finish());
    }
    return out;
}

Tensor decode_scaled(const ContextModel& model, std::span<const std::vector<std::uint8_t>> segments,
                     const Tensor& features) {
    check_segment_count(model, segments.size());
    const auto& bank = ScaleTableBank::standard();
    const auto& units = model.schedule().units;
    const int h = features.height(), w = features.width();
    Tensor y_hat(model.latent_channels(), h, w);
    for (std::size_t u = 0; u < units.size(); ++u) {
        const CodingUnit& cu = units[u];
        const UnitParams p = model.predict_unit(u, features, y_hat);
        entropy::RangeDecoder dec(segments[u]);
        for (int c = cu.c_begin; c < cu.c_end; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (!in_pass(cu.pass, y, x)) continue;
                    const float mu = p.mu.at(c - cu.c_begin, y, x);
                    const float sigma = p.sigma.at(c - cu.c_begin, y, x);
                    const std::int32_t s = dec.decode(bank.table(bank.index_for(sigma)));
                    y_hat.at(c, y, x) = rate::dequantize_one(s, mu);
                }
    }
    return y_hat;
}

LatentCoding encode_latent(const ContextModel& model, const Tensor& y, const Tensor& features, double gain) {
    LatentCoding out = encode_scaled(model, rate::apply_gain(y, {gain, false}), features);
    out.y_hat = rate::remove_gain(out.y_hat, {gain, false});
    return out;
}

Tensor decode_latent(const ContextModel& model, std::span<const std::vector<std::uint8_t>> segments,
                     const Tensor& features, double gain) {
    return rate::remove_gain(decode_scaled(model, segments, features), {gain, false});
}

// ------------------------------------------------------ serial reference

namespace {

// Evaluates a chain of stride-1 convolutions and ReLUs at single output
// positions, memoising every intermediate position it touches. The
// accumulation order per output matches the batched GEMM exactly.
class PointEvaluator {
public:
    using Source = std::function<void(int y, int x, std::vector<float>& out)>;

    PointEvaluator(std::vector<const nn::Layer*> layers, int height, int width, Source source)
        : layers_(std::move(layers)), h_(height), w_(width), source_(std::move(source)),
          memo_(layers_.size() + 1, std::vector<std::optional<std::vector<float>>>(static_cast<std::size_t>(height) * width)) {
        for (const nn::Layer* l : layers_) {
            if (const auto* c = dynamic_cast<const Conv2d*>(l)) {
                if (c->geometry().stride != 1) throw ContractError("serial reference: strided convolution");
            } else if (!dynamic_cast<const Relu*>(l)) {
                throw ContractError("serial reference: unsupported layer " + l->kind());
            }
        }
    }

    const std::vector<float>& at(int y, int x) { return value(static_cast<int>(layers_.size()), y, x); }

private:
    const std::vector<float>& value(int level, int y, int x) {
        auto& slot = memo_[level][static_cast<std::size_t>(y) * w_ + x];
        if (slot) return *slot;
        std::vector<float> out;
        if (level == 0) {
            source_(y, x, out);
        } else {
            const nn::Layer* layer = layers_[level - 1];
            if (const auto* conv = dynamic_cast<const Conv2d*>(layer)) {
                out = convolve(*conv, level - 1, y, x);
            } else {
                out = value(level - 1, y, x);
                for (float& v : out) v = v > 0.0f ? v : 0.0f;
            }
        }
        slot = std::move(out);
        return *slot;
    }

    std::vector<float> convolve(const Conv2d& conv, int below, int y, int x) {
        const int k = conv.geometry().kernel, pad = conv.geometry().pad, cin = conv.in_channels();
        std::vector<const std::vector<float>*> taps(static_cast<std::size_t>(k) * k, nullptr);
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const int iy = y + ky - pad, ix = x + kx - pad;
                if (iy >= 0 && iy < h_ && ix >= 0 && ix < w_) taps[ky * k + kx] = &value(below, iy, ix);
            }
        const auto& wv = conv.weight().value;
        const auto& bv = conv.bias().value;
        const std::size_t row = static_cast<std::size_t>(cin) * k * k;
        std::vector<float> out(conv.out_channels());
        for (int o = 0; o < conv.out_channels(); ++o) {
            const float* wr = wv.data() + o * row;
            float acc = 0.0f;
            for (int c = 0; c < cin; ++c)
                for (int t = 0; t < k * k; ++t) {
                    const float v = taps[t] ? (*taps[t])[c] : 0.0f;
                    acc += wr[static_cast<std::size_t>(c) * k * k + t] * v;
                }
            out[o] = acc + bv[o];
        }
        return out;
    }

    std::vector<const nn::Layer*> layers_;
    int h_, w_;
    Source source_;
    std::vector<std::vector<std::optional<std::vector<float>>>> memo_;
};

}  // namespace

Tensor serial_reference_decode(const ContextModel& model, std::span<const std::vector<std::uint8_t>> segments,
                               const Tensor& features) {
    check_segment_count(model, segments.size());
    const auto& bank = ScaleTableBank::standard();
    const auto& units = model.schedule().units;
    const int M = model.latent_channels();
    const int h = features.height(), w = features.width();
    Tensor y_hat(M, h, w);
    for (std::size_t u = 0; u < units.size(); ++u) {
        const CodingUnit& cu = units[u];
        const int ch = cu.channels();
        std::unique_ptr<PointEvaluator> spatial;
        if (const Conv2d* ctx = model.unit_context(u)) {
            spatial = std::make_unique<PointEvaluator>(
                std::vector<const nn::Layer*>{ctx}, h, w, [&, cu](int y, int x, std::vector<float>& out) {
                    out.assign(ch, 0.0f);
                    if (is_anchor(y, x))
                        for (int c = 0; c < ch; ++c) out[c] = y_hat.at(cu.c_begin + c, y, x);
                });
        }
        std::unique_ptr<PointEvaluator> params;
        if (const Sequential* net = model.unit_net(u)) {
            std::vector<const nn::Layer*> layers;
            for (std::size_t i = 0; i < net->size(); ++i) layers.push_back(&net->at(i));
            params = std::make_unique<PointEvaluator>(layers, h, w, [&, cu](int y, int x, std::vector<float>& out) {
                out.clear();
                for (int c = 0; c < 2 * M; ++c) out.push_back(features.at(c, y, x));
                for (int c = 0; c < cu.c_begin; ++c) out.push_back(y_hat.at(c, y, x));
                if (spatial) {
                    const auto& s = spatial->at(y, x);
                    out.insert(out.end(), s.begin(), s.end());
                }
            });
        }
        entropy::RangeDecoder dec(segments[u]);
        for (int c = cu.c_begin; c < cu.c_end; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (!in_pass(cu.pass, y, x)) continue;
                    float mu, t;
                    if (params) {
                        const auto& v = params->at(y, x);
                        mu = v[c - cu.c_begin];
                        t = v[ch + c - cu.c_begin];
                    } else {
                        mu = features.at(c, y, x);
                        t = features.at(M + c, y, x);
                    }
                    const std::int32_t s = dec.decode(bank.table(bank.index_for(clamp_scale(t))));
                    y_hat.at(c, y, x) = rate::dequantize_one(s, mu);
                }
    }
    return y_hat;
}

std::uint8_t model_id(ContextKind kind, const std::string& transform_name) {
    std::uint32_t hash = 2166136261u;
    for (unsigned char ch : transform_name) {
        hash ^= ch;
        hash *= 16777619u;
    }
    return static_cast<std::uint8_t>((static_cast<unsigned>(kind) << 4) | (hash & 0xFu));
}

}  // namespace rdcl::context
