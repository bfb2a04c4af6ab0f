#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rdcl/nn/param.hpp"

namespace rdcl::nn {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name so
/// they survive checkpoint round trips.
class Adam {
public:
    struct Moments {
        std::vector<float> m, v;
    };

    Adam(ParamList params, AdamConfig config = {});

    void step();
    void zero_grad();

    double lr() const { return config_.lr; }
    void set_lr(double lr) { config_.lr = lr; }
    std::int64_t steps() const { return steps_; }

    const std::map<std::string, Moments>& state() const { return state_; }
    /// Restores moments for parameters present in both; throws ContractError on size mismatch.
    void load_state(std::int64_t steps, std::map<std::string, Moments> state);

private:
    ParamList params_;
    AdamConfig config_;
    std::int64_t steps_ = 0;
    std::map<std::string, Moments> state_;
};

/// Halves (by default) the learning rate after `patience` evaluations
/// without relative improvement greater than `threshold`.
class PlateauScheduler {
public:
    PlateauScheduler(int patience = 10, double factor = 0.5, double threshold = 1e-4)
        : patience_(patience), factor_(factor), threshold_(threshold) {}

    /// Returns true when the learning rate was reduced.
    bool observe(double metric, Adam& opt);
    void reset();

    double best() const { return best_; }
    int bad_epochs() const { return bad_; }

private:
    int patience_;
    double factor_;
    double threshold_;
    double best_ = 0.0;
    bool has_best_ = false;
    int bad_ = 0;
};

}  // namespace rdcl::nn
