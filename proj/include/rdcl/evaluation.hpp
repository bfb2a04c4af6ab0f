#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rdcl/core/tensor.hpp"
#include "rdcl/nn/layers.hpp"

namespace rdcl {
class CompressionModel;
}

namespace rdcl::eval {

inline constexpr double kPsnrCap = 100.0;

/// Mean squared error over all elements; throws ContractError on shape mismatch.
double mse(const Tensor& a, const Tensor& b);
/// -10 log10(mse) with peak 1, capped at 100 dB.
double psnr_from_mse(double mse);
double psnr(const Tensor& a, const Tensor& b);
/// 8 * n_bytes / (height * width).
double bpp(std::size_t n_bytes, int height, int width);

struct RDPoint {
    double bpp = 0.0;
    double psnr = 0.0;
    double gain = 0.0;  // 0 when the point does not come from a gain sweep
};

struct RDCurve {
    std::string label;
    std::vector<RDPoint> points;

    /// Points ordered by bpp.
    RDCurve sorted() const;
    /// Adjacent pairs (in gain order) whose bpp decreases as gain grows.
    int bpp_inversions() const;
    /// Adjacent pairs (in bpp order) whose PSNR decreases.
    int psnr_inversions() const;
};

nlohmann::json to_json(const RDCurve& curve);
/// Accepts {"label", "points": [{"bpp","psnr"[,"gain"]}]} or a bare array
/// of points, or an eval-rd report holding one under "curve"; throws
/// DataError on anything else.
RDCurve curve_from_json(const nlohmann::json& j);

struct RDSweep {
    RDCurve average;                    // mean bpp and mean PSNR per gain
    std::vector<RDCurve> per_image;     // labelled by file name
    std::vector<std::string> skipped;   // unreadable files
};

/// One point per gain, averaging bpp (from the coded size without header)
/// and PSNR over the images. Unreadable files are skipped with a warning;
/// throws DataError when none is usable.
RDSweep rd_curve(const CompressionModel& model, const std::vector<std::filesystem::path>& images,
                 const std::vector<double>& gains, int threads = 1);
RDSweep rd_curve(const CompressionModel& model, const std::vector<Tensor>& images,
                 const std::vector<double>& gains, int threads = 1);

/// Bjontegaard delta rate in percent: log10(bpp) interpolated as a monotone
/// piecewise cubic of PSNR on both curves, averaged over the shared PSNR
/// interval. Needs at least 4 points per curve; throws DomainError when the
/// curves do not overlap in PSNR.
double bd_rate(const RDCurve& anchor, const RDCurve& test);

/// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson slopes).
class Pchip {
public:
    /// x strictly increasing, same length as y, at least 2 points.
    Pchip(std::vector<double> x, std::vector<double> y);
    double operator()(double t) const;
    /// Exact integral of the interpolant over [a, b] within the data range.
    double integrate(double a, double b) const;

private:
    double segment_integral(std::size_t i, double u0, double u1) const;

    std::vector<double> x_, y_, d_;
};

std::size_t count_params(const nn::Layer& layer);
std::size_t count_params(const CompressionModel& model);

/// MACs of one pass split into the part proportional to the pixel count
/// and a per-image remainder (weights applied to globally pooled values).
struct MacsBreakdown {
    std::uint64_t per_pixel = 0;  // proportional part / pixels, floored
    std::uint64_t fixed = 0;
    std::uint64_t total = 0;
};
MacsBreakdown macs_breakdown(const nn::Sequential& net, const Shape& input, std::vector<std::string>& uncounted);
MacsBreakdown macs_breakdown(const CompressionModel& model, int height, int width, std::vector<std::string>& uncounted);
/// Proportional MACs per pixel; the same at every resolution.
std::uint64_t macs_per_pixel(const nn::Sequential& net, const Shape& input, std::vector<std::string>& uncounted);
std::uint64_t macs_per_pixel(const CompressionModel& model, int height, int width, std::vector<std::string>& uncounted);

struct Latency {
    double enc_seconds = 0.0;
    double dec_seconds = 0.0;
    std::size_t samples = 0;  // timed runs per direction
};

/// Mean wall-clock time of compress and decompress (entropy coding
/// included, no disk I/O) over images x repeats after `warmup` discarded
/// passes over the set. Runs on the calling thread only.
Latency latency_benchmark(const CompressionModel& model, const std::vector<Tensor>& images, int repeats,
                          double gain = 1.0, int warmup = 1);

struct ComplexityReport {
    std::size_t params_total = 0;
    std::uint64_t macs_per_pixel = 0;
    std::uint64_t macs_fixed = 0;  // per image, outside macs_per_pixel
    double enc_seconds = 0.0;
    double dec_seconds = 0.0;
    std::vector<std::string> uncounted;
};

nlohmann::json to_json(const ComplexityReport& report);

/// RD plot with bpp on the horizontal axis and PSNR on the vertical one.
std::string rd_svg(const std::vector<RDCurve>& curves, const std::string& title = "");

}  // namespace rdcl::eval
