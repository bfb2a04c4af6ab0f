#include "rdcl/io/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>


namespace rdcl::io {

namespace {

using Color = std::array<double, 3>;

Color random_color(Rng& rng) { return {rng.uniform01(), rng.uniform01(), rng.uniform01()}; }

}  // namespace

Tensor synthetic_image(int height, int width, Rng& rng) {
    if (height < 1 || width < 1) throw ContractError("synthetic_image: dimensions must be positive");
    Tensor img(3, height, width);
    const Color c0 = random_color(rng), c1 = random_color(rng);
    double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
    const double norm = std::sqrt(gx * gx + gy * gy) + 1e-9;
    gx /= norm, gy /= norm;
    const double diag = std::sqrt(static_cast<double>(height) * height + static_cast<double>(width) * width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double t = std::clamp(0.5 + (gx * (x - width / 2.0) + gy * (y - height / 2.0)) / diag, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(c0[c] * (1 - t) + c1[c] * t);
        }

    const int shapes = 3 + static_cast<int>(rng.below(6));
    for (int s = 0; s < shapes; ++s) {
        const Color col = random_color(rng);
        const double cy = rng.uniform(0, height), cx = rng.uniform(0, width);
        const double ry = rng.uniform(0.08, 0.4) * height, rx = rng.uniform(0.08, 0.4) * width;
        const bool ellipse = rng.below(2) == 0;
        const double shade = rng.uniform(-0.4, 0.4);
        const int y0 = std::max(0, static_cast<int>(cy - ry)), y1 = std::min(height, static_cast<int>(cy + ry) + 1);
        const int x0 = std::max(0, static_cast<int>(cx - rx)), x1 = std::min(width, static_cast<int>(cx + rx) + 1);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                if (ellipse && dx * dx + dy * dy > 1.0) continue;
                if (!ellipse && (std::fabs(dx) > 1.0 || std::fabs(dy) > 1.0)) continue;
                const double f = 1.0 + shade * dy;
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(col[c] * f);
            }
    }

    const double texture = rng.uniform(0.0, 0.04);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double n = texture * (rng.uniform01() - 0.5);
            for (int c = 0; c < 3; ++c) {
                float& v = img.at(c, y, x);
                v = std::clamp(static_cast<float>(v + n), 0.0f, 1.0f);
            }
        }
    return img;
}

}  // namespace rdcl::io
