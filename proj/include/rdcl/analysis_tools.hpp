#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "rdcl/core/tensor.hpp"
#include "rdcl/entropy/gaussian.hpp"

namespace rdcl::analysis {

/// Mean product of each window entry with the window centre in the
/// standardized latent (y_hat - mu) / sigma, over all valid k x k windows
/// (stride 1) of all channels. rho is row-major [k,k].
struct CorrelationMap {
    int k = 0;
    std::vector<double> rho;
    std::size_t n_windows = 0;

    int center() const { return (k * k - 1) / 2; }
    /// Entry at offset (dy, dx) from the centre, each in [-(k-1)/2, (k-1)/2].
    double at(int dy, int dx) const { return rho[static_cast<std::size_t>((dy + k / 2) * k + dx + k / 2)]; }
};

/// Throws ContractError for even k, windows larger than the latent or
/// mismatched shapes.
CorrelationMap latent_correlation(const Tensor& y_hat, const entropy::EntropyParams& params, int k = 5);

/// Mean of |rho| over the k^2 - 1 entries other than the centre.
double avg_rho(const CorrelationMap& map);

/// Bits per latent position, summed over channels.
struct BitsMap {
    int height = 0;
    int width = 0;
    std::vector<double> bits;  // row-major [height, width]
    double total = 0.0;

    double at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
};

/// Per-element bits of the centred symbols round(y_hat - mu) under
/// N(0, sigma), summed over channels at each position.
BitsMap bits_allocation_map(const Tensor& y_hat, const entropy::EntropyParams& params);

/// Grayscale PNG of the map: the smallest value maps to black, the largest
/// to white, linearly in between. Each latent position becomes a
/// `scale` x `scale` block.
void export_heatmap(const BitsMap& map, const std::filesystem::path& path, int scale = 1);
/// 8-bit levels the heatmap would contain, row-major at latent resolution.
std::vector<std::uint8_t> heatmap_levels(const BitsMap& map);

nlohmann::json to_json(const CorrelationMap& map);
nlohmann::json to_json(const BitsMap& map);

}  // namespace rdcl::analysis
