#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rdcl::entropy {

inline constexpr int kDefaultPrecision = 16;
inline constexpr double kDefaultTailMass = 1.0 / 512.0;

/// Quantised cumulative distribution for one coding context.
///
/// Bin 0 and the last bin are escape bins for symbols below and above the
/// regular range [min_symbol, max_symbol]; an escaped symbol is followed by
/// its overflow magnitude in bypass bits. cdf has bins()+1 entries running
/// from 0 to 2^precision and every bin holds at least one count.
struct CdfTable {
    int precision = kDefaultPrecision;
    std::int32_t offset = 0;  // symbol value of the first regular bin
    std::vector<std::uint32_t> cdf;

    int bins() const { return static_cast<int>(cdf.size()) - 1; }
    int regular_bins() const { return bins() - 2; }
    std::int32_t min_symbol() const { return offset; }
    std::int32_t max_symbol() const { return offset + regular_bins() - 1; }
    std::uint32_t total() const { return 1u << precision; }
    std::uint32_t count(int bin) const { return cdf[bin + 1] - cdf[bin]; }

    /// Throws ContractError when the table breaks its invariants.
    void validate() const;
};

/// Largest overflow magnitude an escape can carry.
inline constexpr std::uint32_t kMaxEscapeOverflow = (1u << 24) - 2;

/// Quantises a probability vector (already ordered as escape-low,
/// regular..., escape-high) to integer counts summing to 2^precision,
/// with every bin >= 1. Any rounding surplus lands on the most probable bin.
std::vector<std::uint32_t> quantize_masses(std::span<const double> masses, int precision);

/// Discretised Gaussian N(mu_frac, sigma) over integer bins. The regular
/// range covers all but `tail_mass` of the probability.
CdfTable build_cdf(double mu_frac, double sigma, int precision = kDefaultPrecision,
                   double tail_mass = kDefaultTailMass);

/// Geometric grid of scales used to pick a table at coding time.
class ScaleTableBank {
public:
    static constexpr int kSize = 64;
    static constexpr double kMinScale = 0.11;
    static constexpr double kMaxScale = 256.0;

    explicit ScaleTableBank(int precision = kDefaultPrecision, double tail_mass = kDefaultTailMass);

    /// Shared default instance.
    static const ScaleTableBank& standard();

    /// Grid index whose scale is closest to sigma in the log domain.
    int index_for(double sigma) const;
    double scale(int index) const { return scales_[index]; }
    const CdfTable& table(int index) const { return tables_[index]; }
    const std::vector<double>& scales() const { return scales_; }

private:
    std::vector<double> scales_;
    std::vector<double> thresholds_;
    std::vector<CdfTable> tables_;
};

/// -Phi^{-1}(tail_mass / 2), found by bisection on the deterministic CDF.
double tail_multiplier(double tail_mass);

}  // namespace rdcl::entropy
