#include "rdcl/analysis_tools.hpp"

#include <algorithm>
#include <cmath>

#include "rdcl/io/image.hpp"
#include "rdcl/rate_control.hpp"

namespace rdcl::analysis {

CorrelationMap latent_correlation(const Tensor& y_hat, const entropy::EntropyParams& params, int k) {
    require_same_shape(y_hat, params.mu, "latent_correlation");
    require_same_shape(y_hat, params.sigma, "latent_correlation");
    if (k < 1 || k % 2 == 0) throw ContractError("latent_correlation: window size must be odd");
    const int C = y_hat.channels(), H = y_hat.height(), W = y_hat.width();
    if (k > H || k > W) throw ContractError("latent_correlation: window larger than the latent");

    Tensor z(y_hat.shape());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = static_cast<float>((static_cast<double>(y_hat[i]) - params.mu[i]) / params.sigma[i]);

    const int r = k / 2;
    const int rows = H - k + 1, cols = W - k + 1;
    CorrelationMap out;
    out.k = k;
    out.rho.assign(static_cast<std::size_t>(k) * k, 0.0);
    out.n_windows = static_cast<std::size_t>(C) * rows * cols;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            double sum = 0.0;
            for (int c = 0; c < C; ++c) {
                const float* p = z.channel(c);
                for (int cy = r; cy < r + rows; ++cy) {
                    const float* centre = p + static_cast<std::size_t>(cy) * W;
                    const float* other = p + static_cast<std::size_t>(cy + dy) * W + dx;
                    double row = 0.0;
                    for (int cx = r; cx < r + cols; ++cx) row += static_cast<double>(centre[cx]) * other[cx];
                    sum += row;
                }
            }
            out.rho[static_cast<std::size_t>((dy + r) * k + dx + r)] = sum / static_cast<double>(out.n_windows);
        }
    return out;
}

double avg_rho(const CorrelationMap& map) {
    if (map.k < 1 || map.rho.size() != static_cast<std::size_t>(map.k) * map.k)
        throw ContractError("avg_rho: malformed correlation map");
    if (map.k == 1) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < map.rho.size(); ++i)
        if (static_cast<int>(i) != map.center()) s += std::fabs(map.rho[i]);
    return s / static_cast<double>(map.rho.size() - 1);
}

BitsMap bits_allocation_map(const Tensor& y_hat, const entropy::EntropyParams& params) {
    require_same_shape(y_hat, params.mu, "bits_allocation_map");
    require_same_shape(y_hat, params.sigma, "bits_allocation_map");
    BitsMap m;
    m.height = y_hat.height();
    m.width = y_hat.width();
    m.bits.assign(static_cast<std::size_t>(m.height) * m.width, 0.0);
    const std::size_t plane = y_hat.shape().plane();
    for (std::size_t i = 0; i < y_hat.size(); ++i) {
        const std::int32_t s = rate::center_symbol(y_hat[i], params.mu[i]);
        const double b = entropy::gaussian_symbol_bits(s, 0.0, params.sigma[i]);
        m.bits[i % plane] += b;
        m.total += b;
    }
    return m;
}

std::vector<std::uint8_t> heatmap_levels(const BitsMap& map) {
    std::vector<std::uint8_t> out(map.bits.size(), 0);
    if (map.bits.empty()) return out;
    const auto [lo, hi] = std::minmax_element(map.bits.begin(), map.bits.end());
    const double span = *hi - *lo;
    if (!(span > 0.0)) return out;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (map.bits[i] - *lo) / span));
    return out;
}

void export_heatmap(const BitsMap& map, const std::filesystem::path& path, int scale) {
    if (scale < 1) throw ContractError("export_heatmap: scale must be positive");
    if (map.height < 1 || map.width < 1) throw ContractError("export_heatmap: empty map");
    const auto levels = heatmap_levels(map);
    Tensor img(1, map.height * scale, map.width * scale);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            img.at(0, y, x) = static_cast<float>(levels[static_cast<std::size_t>(y / scale) * map.width + x / scale]) / 255.0f;
    io::write_gray_png(path, img);
}

nlohmann::json to_json(const CorrelationMap& map) {
    return {{"k", map.k}, {"rho", map.rho}, {"n_windows", map.n_windows}, {"avg_rho", avg_rho(map)}};
}

nlohmann::json to_json(const BitsMap& map) {
    return {{"shape", {map.height, map.width}}, {"bits", map.bits}, {"total", map.total}};
}

}  // namespace rdcl::analysis
