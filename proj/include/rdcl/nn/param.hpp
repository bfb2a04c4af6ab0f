#pragma once

#include <string>
#include <vector>

namespace rdcl::nn {

/// A trainable array and its gradient accumulator.
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<float> value;
    std::vector<float> grad;

    Param() = default;
    Param(std::string n, std::vector<int> s, float fill = 0.0f) : name(std::move(n)), shape(std::move(s)) {
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        value.assign(count, fill);
        grad.assign(count, 0.0f);
    }

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

using ParamList = std::vector<Param*>;

inline std::size_t count_scalars(const ParamList& params) {
    std::size_t n = 0;
    for (const Param* p : params) n += p->size();
    return n;
}

}  // namespace rdcl::nn
