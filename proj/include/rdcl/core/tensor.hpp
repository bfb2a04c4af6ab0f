#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rdcl/core/error.hpp"

namespace rdcl {

struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const {
        return "[" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
    }
};

/// Dense float array in [C,H,W] layout. Used for images, latents and
/// activations alike; a latent is a Tensor whose spatial dims are the image
/// dims divided by the transform's downsample factor.
class Tensor {
public:
    Tensor() = default;
    Tensor(int c, int h, int w, float fill = 0.0f) : shape_{c, h, w}, data_(shape_.size(), fill) {}
    explicit Tensor(Shape s, float fill = 0.0f) : shape_(s), data_(s.size(), fill) {}
    Tensor(Shape s, std::vector<float> values) : shape_(s), data_(std::move(values)) {
        if (data_.size() != shape_.size()) throw ContractError("tensor: value count does not match shape " + s.str());
    }

    const Shape& shape() const { return shape_; }
    int channels() const { return shape_.c; }
    int height() const { return shape_.h; }
    int width() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }
    std::vector<float>& storage() { return data_; }
    const std::vector<float>& storage() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }
    float& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x]; }
    float at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x]; }

    float* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }
    const float* channel(int c) const { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    /// Channels [begin, end) as a new tensor.
    Tensor slice_channels(int begin, int end) const {
        if (begin < 0 || end > shape_.c || begin > end) throw ContractError("tensor: bad channel slice");
        Tensor out(end - begin, shape_.h, shape_.w);
        std::copy(channel(begin), channel(begin) + out.size(), out.data());
        return out;
    }

    /// Writes `src` into channels starting at `begin`.
    void set_channels(int begin, const Tensor& src) {
        if (src.height() != shape_.h || src.width() != shape_.w || begin + src.channels() > shape_.c)
            throw ContractError("tensor: set_channels shape mismatch");
        std::copy(src.data(), src.data() + src.size(), channel(begin));
    }

    /// Adds `src` into channels starting at `begin`.
    void add_channels(int begin, const Tensor& src) {
        if (src.height() != shape_.h || src.width() != shape_.w || begin + src.channels() > shape_.c)
            throw ContractError("tensor: add_channels shape mismatch");
        float* dst = channel(begin);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ContractError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

/// Concatenates along channels; all inputs must share H and W.
inline Tensor concat_channels(std::span<const Tensor* const> parts) {
    if (parts.empty()) return {};
    int c = 0;
    const int h = parts[0]->height(), w = parts[0]->width();
    for (const Tensor* p : parts) {
        if (p->height() != h || p->width() != w) throw ContractError("concat_channels: spatial mismatch");
        c += p->channels();
    }
    Tensor out(c, h, w);
    int at = 0;
    for (const Tensor* p : parts) {
        out.set_channels(at, *p);
        at += p->channels();
    }
    return out;
}

}  // namespace rdcl
