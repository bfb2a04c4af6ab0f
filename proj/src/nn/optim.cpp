#include "rdcl/nn/optim.hpp"

#include <cmath>

#include "rdcl/core/error.hpp"

namespace rdcl::nn {

Adam::Adam(ParamList params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (const Param* p : params_) {
        if (state_.count(p->name)) throw ContractError("adam: duplicate parameter name " + p->name);
        state_[p->name] = {std::vector<float>(p->size(), 0.0f), std::vector<float>(p->size(), 0.0f)};
    }
}

void Adam::step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const double step_size = config_.lr / c1;
    const auto b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
    for (Param* p : params_) {
        Moments& s = state_.at(p->name);
        for (std::size_t i = 0; i < p->size(); ++i) {
            const float g = p->grad[i];
            s.m[i] = b1 * s.m[i] + (1.0f - b1) * g;
            s.v[i] = b2 * s.v[i] + (1.0f - b2) * g * g;
            const double denom = std::sqrt(s.v[i] / c2) + config_.eps;
            p->value[i] -= static_cast<float>(step_size * s.m[i] / denom);
        }
    }
}

void Adam::zero_grad() {
    for (Param* p : params_) p->zero_grad();
}

void Adam::load_state(std::int64_t steps, std::map<std::string, Moments> state) {
    for (auto& [name, moments] : state) {
        auto it = state_.find(name);
        if (it == state_.end()) continue;
        if (moments.m.size() != it->second.m.size() || moments.v.size() != it->second.v.size())
            throw ContractError("adam: optimizer state size mismatch for " + name);
        it->second = std::move(moments);
    }
    steps_ = steps;
}

bool PlateauScheduler::observe(double metric, Adam& opt) {
    if (!has_best_ || metric < best_ * (1.0 - threshold_)) {
        best_ = metric;
        has_best_ = true;
        bad_ = 0;
        return false;
    }
    if (++bad_ > patience_) {
        opt.set_lr(opt.lr() * factor_);
        bad_ = 0;
        return true;
    }
    return false;
}

void PlateauScheduler::reset() {
    has_best_ = false;
    bad_ = 0;
    best_ = 0.0;
}

}  // namespace rdcl::nn
