// Acceptance run: one PASS/FAIL line per criterion.
//
//   rdcl_acceptance [--only 1,2,...] [--golden DIR] [--work DIR]
//   rdcl_acceptance --regen-golden DIR

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rdcl/analysis_tools.hpp"
#include "rdcl/context_models.hpp"
#include "rdcl/entropy/cdf_table.hpp"
#include "rdcl/entropy/gaussian.hpp"
#include "rdcl/entropy/range_coder.hpp"
#include "rdcl/evaluation.hpp"
#include "rdcl/io/image.hpp"
#include "rdcl/io/synthetic.hpp"
#include "rdcl/model.hpp"
#include "rdcl/nn/layers.hpp"
#include "rdcl/training.hpp"

using namespace rdcl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ------------------------------------------------------------ toy model

ModelConfig toy_config(context::ContextKind kind) {
    ModelConfig c;
    c.context = kind;
    c.transform_config.M = 32;
    c.transform_config.N = 16;
    c.transform_config.width = 16;
    c.transform_config.seed = 2024;
    c.context_hidden = 16;
    return c;
}

std::vector<Tensor> synthetic_images(int n, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i) out.push_back(io::synthetic_image(h, w, rng));
    return out;
}

// Deterministic short run of all three phases over every lambda.
CompressionModel trained_toy(context::ContextKind kind) {
    CompressionModel m(toy_config(kind));
    const auto train = train::Dataset::from_tensors(synthetic_images(160, 96, 96, 7));
    const auto val = train::Dataset::from_tensors(synthetic_images(4, 64, 64, 8));
    train::PhaseSchedule s;
    s.phases = {{train::LambdaPolicy::fixed, 1.44, QuantizerMode::noise, 2},
                {train::LambdaPolicy::uniform, 0.0, QuantizerMode::noise, 6},
                {train::LambdaPolicy::uniform, 0.0, QuantizerMode::ste, 2}};
    s.batch_size = 8;
    s.crop = 64;
    s.initial_lr = 1e-3;
    train::TrainOptions opt;
    opt.seed = 3;
    train::Trainer(m, s, train, val, opt).train_full();
    return m;
}

// ----------------------------------------------------------- criteria

struct CoderStats {
    bool lossless = true;
    bool within_estimate = true;
    double worst_excess = -1e300;  // actual - (estimate * 1.01 + 32), bits
    std::size_t streams = 0;
};

CoderStats run_coder_streams(int n_streams, int n_symbols) {
    CoderStats st;
    Rng rng(101);
    for (int s = 0; s < n_streams; ++s) {
        std::vector<entropy::CdfTable> tables;
        std::vector<double> mus, sigmas;
        for (int t = 0; t < 16; ++t) {
            const double mu = rng.uniform(-0.5, 0.5);
            const double sigma = std::exp(rng.uniform(std::log(0.11), std::log(64.0)));
            tables.push_back(entropy::build_cdf(mu, sigma));
            mus.push_back(mu);
            sigmas.push_back(sigma);
        }
        std::vector<std::int32_t> symbols(static_cast<std::size_t>(n_symbols));
        std::vector<const entropy::CdfTable*> refs(symbols.size());
        double estimate = 0.0;
        for (std::size_t i = 0; i < symbols.size(); ++i) {
            const auto t = static_cast<std::size_t>(rng.below(tables.size()));
            symbols[i] = static_cast<std::int32_t>(std::lround(mus[t] + sigmas[t] * rng.normal()));
            refs[i] = &tables[t];
            estimate += entropy::gaussian_symbol_bits(symbols[i], mus[t], sigmas[t]);
        }
        const auto bytes = entropy::range_encode(symbols, refs);
        if (entropy::range_decode(bytes, refs) != symbols) st.lossless = false;
        const double excess = 8.0 * static_cast<double>(bytes.size()) - (estimate * 1.01 + 32.0);
        st.worst_excess = std::max(st.worst_excess, excess);
        if (excess > 0) st.within_estimate = false;
        ++st.streams;
    }
    return st;
}

Outcome criterion_1(const CoderStats& st, double seconds) {
    return {st.lossless && seconds < 120.0,
            fmt("%zu streams x 10^4 symbols roundtrip %s in %.1f s (limit 120 s)", st.streams,
                st.lossless ? "bit-exact" : "WITH MISMATCHES", seconds)};
}

Outcome criterion_2(const CoderStats& st) {
    return {st.within_estimate,
            fmt("worst stream: coded bits - (estimate * 1.01 + 32) = %.1f (must be <= 0)", st.worst_excess)};
}

Outcome criterion_3() {
    eval::RDCurve a;
    const double bpp[] = {0.12, 0.25, 0.5, 1.0, 2.0, 3.1};
    const double psnr[] = {26.3, 28.9, 31.4, 34.2, 37.5, 39.0};
    for (int i = 0; i < 6; ++i) a.points.push_back({bpp[i], psnr[i], 0.0});
    auto scaled = [&](double f) {
        auto c = a;
        for (auto& p : c.points) p.bpp *= f;
        return c;
    };
    const double same = eval::bd_rate(a, a), up = eval::bd_rate(a, scaled(1.10)), down = eval::bd_rate(a, scaled(0.90));
    const bool ok = same == 0.0 && std::fabs(up - 10.0) <= 0.01 && std::fabs(down + 10.0) <= 0.01;
    return {ok, fmt("bd(A,A) = %g, x1.10 -> %+.4f%%, x0.90 -> %+.4f%%", same, up, down)};
}

Outcome criterion_4() {
    const Shape s{192, 64, 64};
    Rng rng(404);
    Tensor iid(s);
    for (auto& v : iid.values()) v = static_cast<float>(rng.normal());
    const entropy::EntropyParams unit(Tensor(s, 0.0f), Tensor(s, 1.0f));
    const auto m = analysis::latent_correlation(iid, unit, 5);
    double worst_off = 0.0;
    for (int i = 0; i < 25; ++i)
        if (i != m.center()) worst_off = std::max(worst_off, std::fabs(m.rho[i]));

    const Shape s2{16, 256, 256};
    Tensor ar(s2);
    const double a = 0.5, b = std::sqrt(1 - a * a);
    for (int c = 0; c < s2.c; ++c)
        for (int y = 0; y < s2.h; ++y) {
            double x = rng.normal();
            for (int xx = 0; xx < s2.w; ++xx) {
                if (xx > 0) x = a * x + b * rng.normal();
                ar.at(c, y, xx) = static_cast<float>(x);
            }
        }
    const auto m2 = analysis::latent_correlation(ar, {Tensor(s2, 0.0f), Tensor(s2, 1.0f)}, 5);
    const double r1 = m2.at(0, 1);
    const bool ok = std::fabs(m.rho[m.center()] - 1.0) <= 0.02 && worst_off <= 0.02 && std::fabs(r1 - 0.5) <= 0.03;
    return {ok, fmt("iid centre %.4f, max off-centre |rho| %.4f; AR(1) 0.5 offset-1 rho %.4f", m.rho[m.center()],
                    worst_off, r1)};
}

Outcome criterion_5() {
    Rng rng(505);
    std::ostringstream detail;
    bool ok = true;
    for (auto kind : {context::ContextKind::checkerboard, context::ContextKind::charm, context::ContextKind::scctx}) {
        context::ContextConfig cfg;
        cfg.kind = kind;
        cfg.M = kind == context::ContextKind::scctx ? 80 : 20;
        cfg.hidden = 8;
        cfg.seed = 5;
        const context::ContextModel model(cfg);
        const auto& units = model.schedule().units;
        const int h = 6, w = 6;
        int failures = 0;
        for (int probe = 0; probe < 100; ++probe) {
            Tensor f(2 * cfg.M, h, w), y(cfg.M, h, w);
            for (auto& v : f.values()) v = static_cast<float>(rng.normal());
            for (auto& v : y.values()) v = static_cast<float>(rng.normal() * 3);
            const auto split = 1 + static_cast<std::size_t>(rng.below(units.size() - 1));
            std::vector<context::UnitParams> before;
            for (std::size_t u = 0; u < split; ++u) before.push_back(model.predict_unit(u, f, y));
            Tensor z = y;
            for (std::size_t v = split; v < units.size(); ++v)
                for (int c = units[v].c_begin; c < units[v].c_end; ++c)
                    for (int yy = 0; yy < h; ++yy)
                        for (int xx = 0; xx < w; ++xx)
                            if (context::in_pass(units[v].pass, yy, xx))
                                z.at(c, yy, xx) += static_cast<float>(rng.normal() * 10);
            for (std::size_t u = 0; u < split; ++u) {
                const auto after = model.predict_unit(u, f, z);
                if (after.mu != before[u].mu || after.sigma != before[u].sigma) ++failures;
            }
        }
        if (failures) ok = false;
        detail << context::to_string(kind) << " " << failures << " violations; ";
    }
    return {ok, detail.str() + "100 probes per kind"};
}

Outcome criterion_6(const CompressionModel& toy) {
    const auto images = synthetic_images(20, 128, 128, 606);
    int mismatches = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const double gain = toy.gain(i % toy.gains().size());
        const Tensor y = rate::apply_gain(toy.transform().analyze(images[i]), {static_cast<float>(gain), false});
        const Tensor z = toy.hyper().hyper_analyze(y);
        Tensor z_hat(z.shape());
        for (std::size_t k = 0; k < z.size(); ++k) z_hat[k] = rate::round_half_away(z[k]);
        const Tensor f = toy.hyper().hyper_synthesize(z_hat);
        const auto coded = context::encode_scaled(toy.context_model(), y, f);
        const Tensor fast = context::decode_scaled(toy.context_model(), coded.segments, f);
        const Tensor serial = context::serial_reference_decode(toy.context_model(), coded.segments, f);
        if (fast != serial || fast != coded.y_hat) ++mismatches;
    }
    return {mismatches == 0, fmt("%d of 20 trained-toy latents differ between two-pass and serial decode", mismatches)};
}

Outcome criterion_7() {
    Rng rng(707);
    std::vector<std::string> unc;
    nn::Sequential a, b;
    a.add<nn::Conv2d>("a", 3, 8, 3, 1, 1, rng);
    b.add<nn::Conv2d>("b", 8, 16, 3, 2, 1, rng);
    const auto ma = eval::macs_per_pixel(a, {3, 64, 64}, unc);
    const auto mb = eval::macs_per_pixel(b, {8, 64, 64}, unc);
    bool ok = ma == 216 && mb == 288 && unc.empty();
    std::ostringstream detail;
    detail << "conv cases " << ma << " and " << mb << " MACs/pixel";
    for (const std::string name : {"baseline_conv", "gated_block"})
        for (auto kind : {context::ContextKind::hyperprior, context::ContextKind::checkerboard,
                          context::ContextKind::charm, context::ContextKind::scctx}) {
            ModelConfig c;
            c.transform = name;
            c.context = kind;
            const CompressionModel m(c);
            std::vector<std::string> u1, u2;
            const auto small = eval::macs_breakdown(m, 256, 256, u1);
            const auto large = eval::macs_breakdown(m, 512, 512, u2);
            if (small.per_pixel != large.per_pixel || small.per_pixel == 0 || !u1.empty()) {
                ok = false;
                detail << "; " << name << "+" << context::to_string(kind) << " " << small.per_pixel << " vs "
                       << large.per_pixel;
            }
            if (kind == context::ContextKind::hyperprior)
                detail << "; " << name << " " << small.per_pixel << "/pixel + " << small.fixed << " per image";
        }
    detail << "; per-pixel counts equal at 256^2 and 512^2 for 2 transforms x 4 context kinds";
    return {ok, detail.str()};
}

// Desk-scale ordering of the three entropy models.
struct TrendSetup {
    fs::path data_dir;
    int images = 2000;
    int image_side = 96;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    fs::path log_dir;
};

ModelConfig trend_config(context::ContextKind kind, std::uint64_t seed) {
    ModelConfig c;
    c.transform = "baseline_conv";
    c.context = kind;
    c.transform_config = {80, 32, 32, 1, seed};
    c.context_hidden = 32;
    return c;
}

train::PhaseSchedule trend_schedule() {
    auto s = train::desk_schedule();
    s.batch_size = 8;
    s.crop = 64;
    return s;
}

Outcome criterion_8(const TrendSetup& setup) {
    fs::create_directories(setup.data_dir);
    if (io::list_images(setup.data_dir).size() < static_cast<std::size_t>(setup.images)) {
        Rng rng(5);
        for (int i = 0; i < setup.images; ++i)
            io::write_png(setup.data_dir / fmt("synth_%05d.png", i),
                          io::synthetic_image(setup.image_side, setup.image_side, rng));
    }
    const auto schedule = trend_schedule();
    const auto data = train::Dataset::load(setup.data_dir, schedule.crop);
    if (setup.log_dir.empty() == false) fs::create_directories(setup.log_dir);
    const context::ContextKind kinds[] = {context::ContextKind::hyperprior, context::ContextKind::charm,
                                          context::ContextKind::scctx};
    int ordered = 0;
    std::ostringstream detail;
    detail << data.size() << " images; val R+lambda*D (hyperprior, charm, scctx):";
    for (auto seed : setup.seeds) {
        auto [train_set, val_set] = data.split(schedule.val_fraction, seed);
        double loss[3];
        for (int k = 0; k < 3; ++k) {
            CompressionModel m(trend_config(kinds[k], seed));
            train::TrainOptions opt;
            opt.seed = seed;
            if (!setup.log_dir.empty())
                opt.log_path = setup.log_dir / fmt("%s_seed%llu.jsonl", context::to_string(kinds[k]).c_str(),
                                                   static_cast<unsigned long long>(seed));
            opt.on_epoch = [&](const train::EpochLog& l) {
                std::cerr << "  [8] seed " << seed << " " << context::to_string(kinds[k]) << " phase " << l.phase
                          << " epoch " << l.epoch << " val_loss " << l.val_loss << "\n";
            };
            train::Trainer trainer(m, schedule, train_set, val_set, opt);
            trainer.train_full();
            loss[k] = trainer.validate().loss;
        }
        const bool ok = loss[2] <= loss[1] && loss[1] <= loss[0];
        ordered += ok;
        detail << fmt(" seed %llu (%.4f, %.4f, %.4f)%s", static_cast<unsigned long long>(seed), loss[0], loss[1],
                      loss[2], ok ? "" : " out of order");
    }
    detail << fmt("; ordered in %d of %zu seeds (need 2)", ordered, setup.seeds.size());
    return {ordered >= 2, detail.str()};
}

Outcome criterion_9(const CompressionModel& toy) {
    const auto images = synthetic_images(8, 128, 192, 909);
    std::vector<double> gains;
    for (float g : toy.gains()) gains.push_back(g);
    const auto sweep = eval::rd_curve(toy, images, gains);
    double lo = 1e300, hi = 0;
    for (const auto& p : sweep.average.points) lo = std::min(lo, p.bpp), hi = std::max(hi, p.bpp);
    const int inv = sweep.average.bpp_inversions();
    std::ostringstream bpps;
    for (const auto& p : sweep.average.points) bpps << fmt(" %.3f", p.bpp);
    return {inv <= 1 && hi >= 4.0 * lo && lo > 0,
            fmt("%d inversions, span %.2fx; bpp per gain:", inv, lo > 0 ? hi / lo : 0.0) + bpps.str()};
}

Outcome criterion_10(const fs::path& golden) {
    const auto ck = golden / "model.rdck", stream = golden / "stream.rdcl", expect = golden / "decoded.png",
               input = golden / "input.png";
    for (const auto& p : {ck, stream, expect, input})
        if (!fs::exists(p)) return {false, "missing golden file " + p.string()};
    const auto model = load_checkpoint(ck).model;
    const auto bytes = io::read_file(stream);
    const Tensor decoded = model->decompress(bytes);
    const Tensor want = io::read_image(expect);
    bool same = decoded.shape() == want.shape();
    for (std::size_t i = 0; same && i < want.size(); ++i) same = io::to_byte(decoded[i]) == io::to_byte(want[i]);
    const auto fresh = model->compress(io::read_image(input), 2.0).serialize();
    const bool same_stream = fresh == bytes;
    return {same && same_stream,
            fmt("decode %s, re-encode %s on this platform; a second platform was not available here",
                same ? "bit-exact" : "DIFFERS", same_stream ? "bit-exact" : "DIFFERS")};
}

Outcome criterion_11(const CompressionModel& toy) {
    const auto images = synthetic_images(10, 128, 128, 1111);
    double worst = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto view = toy.analyze_latent(images[i], toy.gain(i));
        const auto map = analysis::bits_allocation_map(view.y_hat, view.params);
        double sum = 0.0;
        for (double b : map.bits) sum += b;
        const entropy::EntropyParams centred(Tensor(view.params.sigma.shape(), 0.0f), view.params.sigma);
        const double est = entropy::estimate_rate_bits(view.symbols, centred);
        worst = std::max(worst, std::fabs(sum - est) / est);
    }
    return {worst <= 1e-6, fmt("worst relative gap %.3g over 10 images (limit 1e-6)", worst)};
}

void regen_golden(const fs::path& dir) {
    fs::create_directories(dir);
    const CompressionModel toy = trained_toy(context::ContextKind::checkerboard);
    Rng rng(1010);
    const Tensor x = io::synthetic_image(80, 112, rng);
    io::write_png(dir / "input.png", x);
    const Tensor stored = io::read_image(dir / "input.png");
    save_checkpoint(dir / "model.rdck", toy);
    const auto bytes = toy.compress(stored, 2.0).serialize();
    io::write_file_atomic(dir / "stream.rdcl", bytes);
    io::write_png(dir / "decoded.png", toy.decompress(bytes));
    std::cout << "golden files written to " << dir.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rdcl acceptance criteria"};
    std::string only;
    fs::path golden = RDCL_GOLDEN_DIR, work = fs::temp_directory_path() / "rdcl_acceptance";
    std::optional<fs::path> regen;
    TrendSetup trend;
    app.add_option("--only", only, "Comma-separated criterion numbers (default: all)");
    app.add_option("--golden", golden, "Golden file directory");
    app.add_option("--work", work, "Scratch directory for the trend data and logs");
    app.add_option("--regen-golden", regen, "Write fresh golden files to this directory and exit");
    app.add_option("--trend-images", trend.images, "Images in the trend training folder");
    CLI11_PARSE(app, argc, argv);

    try {
        if (regen) {
            regen_golden(*regen);
            return 0;
        }
        std::set<int> selected;
        std::stringstream ss(only);
        for (std::string tok; std::getline(ss, tok, ',');)
            if (!tok.empty()) selected.insert(std::stoi(tok));
        auto wanted = [&](int n) { return selected.empty() || selected.count(n) != 0; };
        trend.data_dir = work / fmt("trend_data_%d", trend.images);
        trend.log_dir = work / "trend_logs";

        int failed = 0;
        auto report = [&](int n, const std::function<Outcome()>& run) {
            if (!wanted(n)) return;
            const auto t0 = std::chrono::steady_clock::now();
            Outcome o;
            try {
                o = run();
            } catch (const std::exception& e) {
                o = {false, std::string("error: ") + e.what()};
            }
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
                      << fmt("  [%.1f s]", s) << std::endl;
            failed += !o.pass;
        };

        if (wanted(1) || wanted(2)) {
            const auto t0 = std::chrono::steady_clock::now();
            const CoderStats st = run_coder_streams(1000, 10000);
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            report(1, [&] { return criterion_1(st, s); });
            report(2, [&] { return criterion_2(st); });
        }
        report(3, criterion_3);
        report(4, criterion_4);
        report(5, criterion_5);
        std::optional<CompressionModel> toy;
        if (wanted(6) || wanted(9) || wanted(11)) toy.emplace(trained_toy(context::ContextKind::checkerboard));
        report(6, [&] { return criterion_6(*toy); });
        report(7, criterion_7);
        report(8, [&] { return criterion_8(trend); });
        report(9, [&] { return criterion_9(*toy); });
        report(10, [&] { return criterion_10(golden); });
        report(11, [&] { return criterion_11(*toy); });
        std::cout << (failed ? "acceptance: FAILED " + std::to_string(failed) + " criteria" : "acceptance: all selected criteria passed")
                  << std::endl;
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
