#include "rdcl/entropy/cdf_table.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rdcl/core/detmath.hpp"
#include "rdcl/core/error.hpp"
#include "rdcl/entropy/gaussian.hpp"

namespace rdcl::entropy {

void CdfTable::validate() const {
    if (precision < 1 || precision > 16) throw ContractError("cdf table: precision out of range");
    if (cdf.size() < 4) throw ContractError("cdf table: needs at least one regular and two escape bins");
    if (cdf.front() != 0 || cdf.back() != total()) throw ContractError("cdf table: bad total mass");
    for (std::size_t i = 1; i < cdf.size(); ++i)
        if (cdf[i] <= cdf[i - 1]) throw ContractError("cdf table: bin " + std::to_string(i - 1) + " has no mass");
}

std::vector<std::uint32_t> quantize_masses(std::span<const double> masses, int precision) {
    const std::int64_t total = std::int64_t{1} << precision;
    const std::int64_t n = static_cast<std::int64_t>(masses.size());
    if (n < 1 || 2 * n > total) throw ConfigError("quantize_masses: too many bins for the precision");
    double sum = 0.0;
    for (double m : masses) sum += m;
    if (!(sum > 0.0)) throw ContractError("quantize_masses: no probability mass");

    // One count is reserved per bin; the rest is distributed by rounding.
    const double spread = static_cast<double>(total - n);
    std::vector<std::int64_t> counts(masses.size());
    std::int64_t assigned = 0;
    std::size_t mode = 0;
    for (std::size_t i = 0; i < masses.size(); ++i) {
        counts[i] = 1 + static_cast<std::int64_t>(std::floor(masses[i] / sum * spread + 0.5));
        assigned += counts[i];
        if (masses[i] > masses[mode]) mode = i;
    }
    counts[mode] += total - assigned;
    while (counts[mode] < 1) {
        std::size_t donor = mode == 0 ? 1 : 0;
        for (std::size_t i = 0; i < counts.size(); ++i)
            if (i != mode && counts[i] > counts[donor]) donor = i;
        counts[donor] -= 1;
        counts[mode] += 1;
    }

    std::vector<std::uint32_t> cdf(masses.size() + 1, 0);
    for (std::size_t i = 0; i < counts.size(); ++i) cdf[i + 1] = cdf[i] + static_cast<std::uint32_t>(counts[i]);
    return cdf;
}

double tail_multiplier(double tail_mass) {
    if (!(tail_mass > 0.0 && tail_mass < 1.0)) throw DomainError("tail_multiplier: tail mass must be in (0,1)");
    const double target = tail_mass / 2.0;
    double lo = 0.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (detmath::normal_cdf(-mid) > target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

CdfTable build_cdf(double mu_frac, double sigma, int precision, double tail_mass) {
    if (precision < 8 || precision > 16) throw ConfigError("build_cdf: precision must be in [8, 16]");
    const double s = clamp_sigma(sigma);
    const double m = tail_multiplier(tail_mass);
    auto lo = static_cast<std::int32_t>(-std::ceil(s * m - mu_frac));
    auto hi = static_cast<std::int32_t>(std::ceil(s * m + mu_frac));
    // Wide scales at low precision: keep the central bins that fit, the
    // rest is carried by the escapes.
    const std::int32_t max_span = (1 << (precision - 1)) - 3;
    if (hi - lo + 1 > max_span) {
        lo = -(max_span / 2);
        hi = lo + max_span - 1;
    }

    auto mass = [&](double center_dist) {
        const double v = std::fabs(center_dist);
        return detmath::normal_cdf((0.5 - v) / s) - detmath::normal_cdf((-0.5 - v) / s);
    };
    std::vector<double> masses;
    masses.reserve(static_cast<std::size_t>(hi - lo) + 3);
    masses.push_back(detmath::normal_cdf((lo - 0.5 - mu_frac) / s));
    for (std::int32_t v = lo; v <= hi; ++v) masses.push_back(mass(v - mu_frac));
    masses.push_back(detmath::normal_cdf((mu_frac - hi - 0.5) / s));

    CdfTable table;
    table.precision = precision;
    table.offset = lo;
    table.cdf = quantize_masses(masses, precision);
    return table;
}

ScaleTableBank::ScaleTableBank(int precision, double tail_mass) {
    const double log_min = detmath::log(kMinScale);
    const double log_max = detmath::log(kMaxScale);
    std::vector<double> logs(kSize);
    for (int i = 0; i < kSize; ++i) {
        logs[i] = log_min + (log_max - log_min) * i / (kSize - 1);
        scales_.push_back(i == 0 ? kMinScale : (i == kSize - 1 ? kMaxScale : detmath::exp(logs[i])));
    }
    for (int i = 0; i + 1 < kSize; ++i) thresholds_.push_back(detmath::exp(0.5 * (logs[i] + logs[i + 1])));
    tables_.reserve(kSize);
    for (double s : scales_) tables_.push_back(build_cdf(0.0, s, precision, tail_mass));
}

const ScaleTableBank& ScaleTableBank::standard() {
    static const ScaleTableBank bank;
    return bank;
}

int ScaleTableBank::index_for(double sigma) const {
    if (!(sigma > kMinScale)) return 0;
    const auto it = std::lower_bound(thresholds_.begin(), thresholds_.end(), sigma);
    return static_cast<int>(it - thresholds_.begin());
}

}  // namespace rdcl::entropy
