#include "rdcl/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "rdcl/io/image.hpp"
#include "rdcl/model.hpp"

namespace rdcl::eval {

namespace fs = std::filesystem;
using nlohmann::json;

double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    if (a.empty()) throw ContractError("mse: empty images");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double psnr_from_mse(double m) {
    if (!(m > 0.0)) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(m));
}

double psnr(const Tensor& a, const Tensor& b) { return psnr_from_mse(mse(a, b)); }

double bpp(std::size_t n_bytes, int height, int width) {
    if (height <= 0 || width <= 0) throw ContractError("bpp: dimensions must be positive");
    return 8.0 * static_cast<double>(n_bytes) / (static_cast<double>(height) * width);
}

// ---------------------------------------------------------------- curves

RDCurve RDCurve::sorted() const {
    RDCurve c = *this;
    std::stable_sort(c.points.begin(), c.points.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
    return c;
}

int RDCurve::bpp_inversions() const {
    std::vector<RDPoint> p = points;
    std::stable_sort(p.begin(), p.end(), [](const RDPoint& a, const RDPoint& b) { return a.gain < b.gain; });
    int n = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i].bpp < p[i - 1].bpp) ++n;
    return n;
}

int RDCurve::psnr_inversions() const {
    const RDCurve s = sorted();
    int n = 0;
    for (std::size_t i = 1; i < s.points.size(); ++i)
        if (s.points[i].psnr < s.points[i - 1].psnr) ++n;
    return n;
}

json to_json(const RDCurve& curve) {
    json pts = json::array();
    for (const auto& p : curve.points) pts.push_back({{"bpp", p.bpp}, {"psnr", p.psnr}, {"gain", p.gain}});
    return {{"label", curve.label}, {"points", pts}};
}

RDCurve curve_from_json(const json& j) {
    RDCurve c;
    try {
        const json* pts = &j;
        if (j.is_object()) {
            if (j.contains("curve") && j.at("curve").is_object()) return curve_from_json(j.at("curve"));
            if (j.contains("label")) c.label = j.at("label").get<std::string>();
            pts = j.contains("points") ? &j.at("points") : &j.at("curve");
        }
        if (!pts->is_array()) throw DataError("RD curve: points must be an array");
        for (const auto& p : *pts) {
            RDPoint r;
            r.bpp = p.at("bpp").get<double>();
            r.psnr = p.at("psnr").get<double>();
            if (p.contains("gain")) r.gain = p.at("gain").get<double>();
            c.points.push_back(r);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("RD curve JSON is malformed: ") + e.what());
    }
    return c;
}

// ------------------------------------------------------------- rd sweep

namespace {

int worker_count(int threads, std::size_t jobs) {
    const int t = std::max(1, threads);
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(t), std::max<std::size_t>(jobs, 1)));
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
    const int workers = worker_count(threads, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

RDSweep sweep(const CompressionModel& model, const std::vector<Tensor>& images, const std::vector<std::string>& names,
              const std::vector<double>& gains, int threads) {
    if (images.empty()) throw DataError("rd_curve: no usable images");
    if (gains.empty()) throw ContractError("rd_curve: empty gain grid");
    const std::size_t n = images.size();
    std::vector<std::vector<RDPoint>> grid(n, std::vector<RDPoint>(gains.size()));
    parallel_for(n * gains.size(), threads, [&](std::size_t job) {
        const std::size_t i = job / gains.size(), g = job % gains.size();
        const Tensor& x = images[i];
        const auto bs = model.compress(x, gains[g]);
        const Tensor x_hat = model.decompress(bs);
        grid[i][g] = {bpp(bs.payload_bytes(), x.height(), x.width()), psnr(x, x_hat), gains[g]};
    });
    RDSweep out;
    out.average.label = model.config().transform + "+" + context::to_string(model.config().context);
    for (std::size_t g = 0; g < gains.size(); ++g) {
        RDPoint avg{0.0, 0.0, gains[g]};
        for (std::size_t i = 0; i < n; ++i) {
            avg.bpp += grid[i][g].bpp;
            avg.psnr += grid[i][g].psnr;
        }
        avg.bpp /= static_cast<double>(n);
        avg.psnr /= static_cast<double>(n);
        out.average.points.push_back(avg);
    }
    for (std::size_t i = 0; i < n; ++i) out.per_image.push_back({names[i], grid[i]});
    return out;
}

}  // namespace

RDSweep rd_curve(const CompressionModel& model, const std::vector<Tensor>& images, const std::vector<double>& gains,
                 int threads) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < images.size(); ++i) names.push_back("image" + std::to_string(i));
    return sweep(model, images, names, gains, threads);
}

RDSweep rd_curve(const CompressionModel& model, const std::vector<fs::path>& paths, const std::vector<double>& gains,
                 int threads) {
    std::vector<Tensor> images;
    std::vector<std::string> names, skipped;
    for (const auto& p : paths) {
        try {
            images.push_back(io::read_image(p));
            names.push_back(p.filename().string());
        } catch (const DataError& e) {
            std::cerr << "warning: skipping " << p.string() << ": " << e.what() << "\n";
            skipped.push_back(p.string());
        }
    }
    RDSweep out = sweep(model, images, names, gains, threads);
    out.skipped = std::move(skipped);
    return out;
}

// --------------------------------------------------------------- pchip

namespace {

// Three-point end slope with the usual shape-preserving limits.
double end_slope(double h0, double h1, double d0, double d1) {
    double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if ((s > 0) != (d0 > 0) || s == 0.0) return 0.0;
    if ((d0 > 0) != (d1 > 0) && std::fabs(s) > std::fabs(3.0 * d0)) s = 3.0 * d0;
    return s;
}

}  // namespace

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw ContractError("pchip: need at least two points and matching sizes");
    for (std::size_t i = 1; i < n; ++i)
        if (!(x_[i] > x_[i - 1])) throw DomainError("pchip: abscissae must be strictly increasing");
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x_[i + 1] - x_[i];
        delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    d_.assign(n, 0.0);
    if (n == 2) {
        d_[0] = d_[1] = delta[0];
        return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (delta[k - 1] * delta[k] <= 0.0) continue;
        const double w1 = 2.0 * h[k] + h[k - 1], w2 = h[k] + 2.0 * h[k - 1];
        d_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
    d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

double Pchip::operator()(double t) const {
    const std::size_t n = x_.size();
    std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin());
    i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
    const double h = x_[i + 1] - x_[i], u = (t - x_[i]) / h;
    const double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * y_[i] + (u3 - 2 * u2 + u) * h * d_[i] + (-2 * u3 + 3 * u2) * y_[i + 1] +
           (u3 - u2) * h * d_[i + 1];
}

double Pchip::segment_integral(std::size_t i, double u0, double u1) const {
    const double h = x_[i + 1] - x_[i];
    auto prim = [&](double u) {
        const double u2 = u * u, u3 = u2 * u, u4 = u3 * u;
        return (u4 / 2 - u3 + u) * y_[i] + (u4 / 4 - 2 * u3 / 3 + u2 / 2) * h * d_[i] + (-u4 / 2 + u3) * y_[i + 1] +
               (u4 / 4 - u3 / 3) * h * d_[i + 1];
    };
    return h * (prim(u1) - prim(u0));
}

double Pchip::integrate(double a, double b) const {
    if (a > b) return -integrate(b, a);
    if (a < x_.front() || b > x_.back()) throw DomainError("pchip: integration bounds outside the data range");
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < x_.size(); ++i) {
        const double lo = std::max(a, x_[i]), hi = std::min(b, x_[i + 1]);
        if (hi <= lo) continue;
        const double h = x_[i + 1] - x_[i];
        total += segment_integral(i, (lo - x_[i]) / h, (hi - x_[i]) / h);
    }
    return total;
}

// -------------------------------------------------------------- bd rate

namespace {

Pchip log_rate_of_psnr(const RDCurve& c, const char* which) {
    if (c.points.size() < 4) throw ContractError(std::string("bd_rate: ") + which + " curve needs at least 4 points");
    std::vector<RDPoint> p = c.points;
    std::sort(p.begin(), p.end(), [](const RDPoint& a, const RDPoint& b) { return a.psnr < b.psnr; });
    std::vector<double> x, y;
    for (const auto& q : p) {
        if (!(q.bpp > 0.0) || !std::isfinite(q.psnr))
            throw DomainError(std::string("bd_rate: ") + which + " curve has a non-positive rate or non-finite PSNR");
        x.push_back(q.psnr);
        y.push_back(std::log10(q.bpp));
    }
    return Pchip(std::move(x), std::move(y));
}

std::pair<double, double> psnr_range(const RDCurve& c) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : c.points) {
        lo = std::min(lo, p.psnr);
        hi = std::max(hi, p.psnr);
    }
    return {lo, hi};
}

}  // namespace

double bd_rate(const RDCurve& anchor, const RDCurve& test) {
    const Pchip fa = log_rate_of_psnr(anchor, "anchor");
    const Pchip ft = log_rate_of_psnr(test, "test");
    const auto [alo, ahi] = psnr_range(anchor);
    const auto [tlo, thi] = psnr_range(test);
    const double lo = std::max(alo, tlo), hi = std::min(ahi, thi);
    if (!(hi > lo)) throw DomainError("bd_rate: the curves do not overlap in PSNR");
    const double diff = (ft.integrate(lo, hi) - fa.integrate(lo, hi)) / (hi - lo);
    return 100.0 * (std::pow(10.0, diff) - 1.0);
}

// ----------------------------------------------------------- complexity

std::size_t count_params(const nn::Layer& layer) {
    std::vector<const nn::Param*> p;
    layer.collect(p);
    std::size_t n = 0;
    for (const auto* q : p) n += q->size();
    return n;
}

std::size_t count_params(const CompressionModel& model) { return model.parameter_count(); }

namespace {

// Counts at H x W and 2H x 2W separate the part growing with the pixel
// count from the per-image part (pooled attention weights and the like).
MacsBreakdown split_macs(std::uint64_t at_1x, std::uint64_t at_2x, std::uint64_t pixels) {
    if (at_2x < at_1x || (at_2x - at_1x) % 3 != 0 || (at_2x - at_1x) / 3 > at_1x)
        throw ContractError("macs: counts do not scale with the pixel count");
    MacsBreakdown b;
    const std::uint64_t scaling = (at_2x - at_1x) / 3;
    b.total = at_1x;
    b.fixed = at_1x - scaling;
    b.per_pixel = scaling / pixels;
    return b;
}

}  // namespace

MacsBreakdown macs_breakdown(const nn::Sequential& net, const Shape& input, std::vector<std::string>& uncounted) {
    if (input.h <= 0 || input.w <= 0) throw ContractError("macs_per_pixel: dimensions must be positive");
    std::vector<std::string> again;
    const auto a = net.count_macs(input, uncounted);
    const auto b = net.count_macs({input.c, 2 * input.h, 2 * input.w}, again);
    return split_macs(a, b, static_cast<std::uint64_t>(input.h) * input.w);
}

MacsBreakdown macs_breakdown(const CompressionModel& model, int height, int width, std::vector<std::string>& uncounted) {
    if (height <= 0 || width <= 0 || height % transforms::kImageAlign || width % transforms::kImageAlign)
        throw ContractError("macs_per_pixel: dimensions must be positive multiples of 64");
    std::vector<std::string> again;
    const auto a = model.macs(height, width, uncounted);
    const auto b = model.macs(2 * height, 2 * width, again);
    return split_macs(a, b, static_cast<std::uint64_t>(height) * width);
}

std::uint64_t macs_per_pixel(const nn::Sequential& net, const Shape& input, std::vector<std::string>& uncounted) {
    return macs_breakdown(net, input, uncounted).per_pixel;
}

std::uint64_t macs_per_pixel(const CompressionModel& model, int height, int width, std::vector<std::string>& uncounted) {
    return macs_breakdown(model, height, width, uncounted).per_pixel;
}

Latency latency_benchmark(const CompressionModel& model, const std::vector<Tensor>& images, int repeats, double gain,
                          int warmup) {
    if (images.empty()) throw DataError("latency_benchmark: no images");
    if (repeats < 1) throw ContractError("latency_benchmark: repeats must be positive");
    using clock = std::chrono::steady_clock;
    for (int w = 0; w < warmup; ++w)
        for (const auto& x : images) (void)model.decompress(model.compress(x, gain).serialize());
    double enc = 0.0, dec = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < repeats; ++r)
        for (const auto& x : images) {
            const auto t0 = clock::now();
            const auto bytes = model.compress(x, gain).serialize();
            const auto t1 = clock::now();
            const Tensor x_hat = model.decompress(bytes);
            const auto t2 = clock::now();
            enc += std::chrono::duration<double>(t1 - t0).count();
            dec += std::chrono::duration<double>(t2 - t1).count();
            ++n;
        }
    return {enc / static_cast<double>(n), dec / static_cast<double>(n), n};
}

json to_json(const ComplexityReport& r) {
    return {{"params_total", r.params_total},
            {"macs_per_pixel", r.macs_per_pixel},
            {"macs_fixed", r.macs_fixed},
            {"enc_seconds", r.enc_seconds},
            {"dec_seconds", r.dec_seconds},
            {"uncounted", r.uncounted}};
}

// ------------------------------------------------------------------ svg

std::string rd_svg(const std::vector<RDCurve>& curves, const std::string& title) {
    constexpr double W = 640, H = 480, L = 70, R = 20, T = 40, B = 60;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& c : curves)
        for (const auto& p : c.points) {
            x0 = std::min(x0, p.bpp), x1 = std::max(x1, p.bpp);
            y0 = std::min(y0, p.psnr), y1 = std::max(y1, p.psnr);
        }
    if (!(x1 >= x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double px = (x1 - x0) * 0.05, py = (y1 - y0) * 0.05;
    x0 -= px, x1 += px, y0 -= py, y1 += py;
    auto sx = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
    auto sy = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::ostringstream s;
    s.precision(6);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double vx = x0 + (x1 - x0) * k / 5, vy = y0 + (y1 - y0) * k / 5;
        s << "<text x=\"" << sx(vx) << "\" y=\"" << H - B + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
          << std::round(vx * 1000) / 1000 << "</text>\n";
        s << "<text x=\"" << L - 6 << "\" y=\"" << sy(vy) + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
          << std::round(vy * 100) / 100 << "</text>\n";
    }
    s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" font-size=\"13\" text-anchor=\"middle\">bpp</text>\n";
    s << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (T + H - B) / 2 << ")\">PSNR (dB)</text>\n";
    if (!title.empty())
        s << "<text x=\"" << W / 2 << "\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">" << title << "</text>\n";
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const char* color = colors[i % 6];
        const RDCurve c = curves[i].sorted();
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : c.points) s << sx(p.bpp) << "," << sy(p.psnr) << " ";
        s << "\"/>\n";
        for (const auto& p : c.points)
            s << "<circle cx=\"" << sx(p.bpp) << "\" cy=\"" << sy(p.psnr) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        s << "<text x=\"" << L + 10 << "\" y=\"" << T + 16 * (i + 1) << "\" font-size=\"12\" fill=\"" << color << "\">"
          << c.label << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace rdcl::eval
