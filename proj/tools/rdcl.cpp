#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "rdcl/analysis_tools.hpp"
#include "rdcl/evaluation.hpp"
#include "rdcl/io/image.hpp"
#include "rdcl/io/synthetic.hpp"
#include "rdcl/model.hpp"
#include "rdcl/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rdcl;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kMismatch = 4 };

int thread_budget() {
    int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("RDCL_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1) n = std::min(n, cap);
        } catch (const std::exception&) {
            throw ConfigError("RDCL_THREADS must be a positive integer");
        }
    }
    return n;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    io::write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_json(const std::optional<fs::path>& path, const json& j) {
    if (path) write_text_atomic(*path, j.dump(2) + "\n");
    else std::cout << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

/// "11pt" (or empty) selects the model's trained gains; otherwise a comma
/// separated list of positive reals.
std::vector<double> parse_gains(const std::string& text, const CompressionModel& model) {
    if (text.empty() || text == "11pt" || text == "trained") {
        const auto g = model.gains();
        return {g.begin(), g.end()};
    }
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("bad gain '" + item + "'");
        }
        if (!(out.back() > 0.0)) throw ConfigError("gains must be positive");
    }
    if (out.empty()) throw ConfigError("empty gain list");
    return out;
}

double resolve_gain(const CompressionModel& model, std::optional<double> gain, std::optional<double> index) {
    if (gain && index) throw ConfigError("give either --gain or --gain-index, not both");
    if (gain) {
        if (!(*gain > 0.0)) throw ConfigError("--gain must be positive");
        return *gain;
    }
    if (index) return model.gain_at(*index);
    return model.gain(model.config().grid.index_of(model.config().grid.lambda_ref));
}

struct ModelFlags {
    std::string transform = "baseline_conv";
    std::string context = "hyperprior";
    int M = 192, N = 128, width = 128, blocks = 1, hidden = 0, kernel = 3;

    void add(CLI::App* app) {
        app->add_option("--transform", transform, "Registered transform name");
        app->add_option("--context", context, "hyperprior | checkerboard | charm | scctx");
        app->add_option("--M", M, "Latent channels");
        app->add_option("--N", N, "Hyper-latent channels");
        app->add_option("--width", width, "Transform hidden width");
        app->add_option("--blocks", blocks, "Gated blocks per stage (gated_block)");
        app->add_option("--hidden", hidden, "Context net width (0: M, scctx matched to charm)");
        app->add_option("--kernel", kernel, "Context net kernel size");
    }

    ModelConfig config(std::uint64_t seed) const {
        ModelConfig c;
        c.transform = transform;
        c.context = context::parse_context_kind(context);
        c.transform_config = {M, N, width, blocks, seed};
        c.context_hidden = hidden;
        c.context_kernel = kernel;
        if (!transforms::TransformRegistry::global().contains(transform))
            throw ConfigError("unknown transform '" + transform + "'");
        return c;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rdcl: learned lossy image compression toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Random seed")->capture_default_str();

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "Write procedural PNG images");
    fs::path synth_out;
    int synth_count = 100, synth_h = 96, synth_w = 96;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--count", synth_count, "Number of images")->check(CLI::PositiveNumber);
    synth->add_option("--height", synth_h, "Image height")->check(CLI::PositiveNumber);
    synth->add_option("--width", synth_w, "Image width")->check(CLI::PositiveNumber);

    // init
    auto* init = app.add_subcommand("init", "Write an untrained checkpoint");
    ModelFlags init_flags;
    fs::path init_out;
    init_flags.add(init);
    init->add_option("--out", init_out, "Checkpoint path")->required();

    // train
    auto* train = app.add_subcommand("train", "Train a model with the three-phase schedule");
    ModelFlags train_flags;
    train_flags.add(train);
    fs::path train_images, train_out;
    std::optional<fs::path> train_config, train_log, train_resume;
    std::string preset = "desk";
    std::optional<int> batch, crop;
    std::optional<double> lr;
    std::size_t max_steps = 0;
    train->add_option("--images", train_images, "Training image directory")->required();
    train->add_option("--out", train_out, "Checkpoint path (written every epoch)")->required();
    train->add_option("--preset", preset, "default | desk")->check(CLI::IsMember({"default", "desk"}));
    train->add_option("--config", train_config, "JSON schedule overriding the preset");
    train->add_option("--batch", batch, "Batch size");
    train->add_option("--crop", crop, "Crop size (multiple of 64)");
    train->add_option("--lr", lr, "Initial learning rate");
    train->add_option("--log", train_log, "JSON-lines epoch log");
    train->add_option("--resume", train_resume, "Resume from a checkpoint written by train");
    train->add_option("--max-steps-per-epoch", max_steps, "Cap optimizer steps per epoch (0: full pass)");

    // compress / decompress
    auto* comp = app.add_subcommand("compress", "Compress an image");
    fs::path comp_model, comp_in, comp_out;
    std::optional<double> comp_gain, comp_index;
    comp->add_option("--model", comp_model, "Checkpoint")->required();
    comp->add_option("--gain", comp_gain, "Latent gain a");
    comp->add_option("--gain-index", comp_index, "Fractional index into the trained gains");
    comp->add_option("--out", comp_out, "Bitstream path")->required();
    comp->add_option("input", comp_in, "PNG or PPM image")->required();

    auto* decomp = app.add_subcommand("decompress", "Decompress a bitstream to PNG");
    fs::path dec_model, dec_in, dec_out;
    decomp->add_option("--model", dec_model, "Checkpoint")->required();
    decomp->add_option("--out", dec_out, "PNG path")->required();
    decomp->add_option("input", dec_in, "Bitstream")->required();

    // eval-rd
    auto* evalrd = app.add_subcommand("eval-rd", "Rate-distortion sweep over gains");
    fs::path ev_model, ev_images;
    std::string ev_gains = "11pt";
    std::optional<fs::path> ev_json, ev_svg;
    std::vector<fs::path> ev_anchors;
    evalrd->add_option("--model", ev_model, "Checkpoint")->required();
    evalrd->add_option("--images", ev_images, "Image directory")->required();
    evalrd->add_option("--gains", ev_gains, "11pt (trained gains) or comma-separated values");
    evalrd->add_option("--json", ev_json, "Report path");
    evalrd->add_option("--svg", ev_svg, "RD plot path");
    evalrd->add_option("--anchor", ev_anchors, "Anchor RD curve JSON for BD-Rate (repeatable)");

    // bd-rate
    auto* bd = app.add_subcommand("bd-rate", "BD-Rate between two RD curves");
    fs::path bd_anchor, bd_test;
    bd->add_option("--anchor", bd_anchor, "Anchor curve JSON")->required();
    bd->add_option("--test", bd_test, "Test curve JSON")->required();

    // correlation
    auto* corr = app.add_subcommand("correlation", "Latent correlation of one image");
    fs::path co_model, co_image;
    int co_k = 5;
    std::optional<double> co_gain, co_index;
    std::optional<fs::path> co_json;
    corr->add_option("--model", co_model, "Checkpoint")->required();
    corr->add_option("--image", co_image, "Image")->required();
    corr->add_option("--k", co_k, "Odd window size");
    corr->add_option("--gain", co_gain, "Latent gain a (default: gain at lambda_ref)");
    corr->add_option("--gain-index", co_index, "Fractional index into the trained gains");
    corr->add_option("--json", co_json, "Output JSON path");

    // bits-map
    auto* bits = app.add_subcommand("bits-map", "Bit-allocation heatmap of one image");
    fs::path bm_model, bm_image, bm_out;
    int bm_scale = 16;
    std::optional<double> bm_gain, bm_index;
    std::optional<fs::path> bm_json;
    bits->add_option("--model", bm_model, "Checkpoint")->required();
    bits->add_option("--image", bm_image, "Image")->required();
    bits->add_option("--out", bm_out, "Heatmap PNG path")->required();
    bits->add_option("--scale", bm_scale, "Pixels per latent position")->check(CLI::PositiveNumber);
    bits->add_option("--gain", bm_gain, "Latent gain a (default: gain at lambda_ref)");
    bits->add_option("--gain-index", bm_index, "Fractional index into the trained gains");
    bits->add_option("--json", bm_json, "Output JSON path");

    // complexity
    auto* cx = app.add_subcommand("complexity", "Parameter count and MACs per pixel");
    std::optional<fs::path> cx_model;
    ModelFlags cx_flags;
    int cx_h = 256, cx_w = 256;
    std::optional<fs::path> cx_json;
    cx->add_option("--model", cx_model, "Checkpoint (otherwise built from the model flags)");
    cx_flags.add(cx);
    cx->add_option("--height", cx_h, "Input height (multiple of 64)");
    cx->add_option("--img-width", cx_w, "Input width (multiple of 64)");
    cx->add_option("--json", cx_json, "Output JSON path");

    // bench
    auto* bench = app.add_subcommand("bench", "Encode/decode latency");
    fs::path be_model, be_images;
    int be_repeats = 3;
    std::optional<double> be_gain;
    std::optional<fs::path> be_json;
    bench->add_option("--model", be_model, "Checkpoint")->required();
    bench->add_option("--images", be_images, "Image directory")->required();
    bench->add_option("--repeats", be_repeats, "Timed passes over the images")->check(CLI::PositiveNumber);
    bench->add_option("--gain", be_gain, "Latent gain a");
    bench->add_option("--json", be_json, "Output JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        const int threads = thread_budget();
        if (synth->parsed()) {
            fs::create_directories(synth_out);
            Rng rng(seed);
            const int digits = static_cast<int>(std::to_string(synth_count).size());
            for (int i = 0; i < synth_count; ++i) {
                Rng img_rng(rng.fork_seed());
                std::ostringstream name;
                name << "synth_" << std::setw(digits) << std::setfill('0') << i << ".png";
                io::write_png(synth_out / name.str(), io::synthetic_image(synth_h, synth_w, img_rng));
            }
            std::cout << "wrote " << synth_count << " images to " << synth_out.string() << "\n";
        } else if (init->parsed()) {
            CompressionModel model(init_flags.config(seed));
            save_checkpoint(init_out, model);
            std::cout << "params " << model.parameter_count() << "\n";
        } else if (train->parsed()) {
            train::PhaseSchedule schedule = preset == "default" ? train::default_schedule() : train::desk_schedule();
            if (train_config) schedule = train::schedule_from_json(read_json(*train_config), schedule);
            if (batch) schedule.batch_size = *batch;
            if (crop) schedule.crop = *crop;
            if (lr) schedule.initial_lr = *lr;
            schedule.validate();
            std::unique_ptr<CompressionModel> model;
            TrainingState state;
            if (train_resume) {
                auto loaded = load_checkpoint(*train_resume);
                model = std::move(loaded.model);
                state = loaded.state;
            } else {
                model = std::make_unique<CompressionModel>(train_flags.config(seed));
            }
            const auto data = train::Dataset::load(train_images, schedule.crop);
            auto [train_set, val_set] = data.split(schedule.val_fraction, seed);
            train::TrainOptions opts;
            opts.seed = seed;
            opts.checkpoint = train_out;
            opts.log_path = train_log;
            opts.max_steps_per_epoch = max_steps;
            opts.on_epoch = [](const train::EpochLog& l) { std::cout << train::to_json(l).dump() << std::endl; };
            train::Trainer trainer(*model, schedule, train_set, val_set, opts);
            if (train_resume) trainer.resume(state);
            trainer.train_full();
            std::cout << "saved " << train_out.string() << "\n";
        } else if (comp->parsed()) {
            const auto model = load_checkpoint(comp_model).model;
            const Tensor x = io::read_image(comp_in);
            const double g = resolve_gain(*model, comp_gain, comp_index);
            const auto bs = model->compress(x, g);
            io::write_file_atomic(comp_out, bs.serialize());
            std::cout << std::setprecision(6) << "bpp " << eval::bpp(bs.payload_bytes(), x.height(), x.width())
                      << " bytes " << bs.total_bytes() << " gain " << bs.gain << "\n";
        } else if (decomp->parsed()) {
            const auto model = load_checkpoint(dec_model).model;
            const Tensor x = model->decompress(io::read_file(dec_in));
            io::write_png(dec_out, x);
            std::cout << "decoded " << x.width() << "x" << x.height() << "\n";
        } else if (evalrd->parsed()) {
            const auto model = load_checkpoint(ev_model).model;
            const auto sweep = eval::rd_curve(*model, io::list_images(ev_images), parse_gains(ev_gains, *model), threads);
            json report{{"curve", eval::to_json(sweep.average)}};
            json per_image = json::object();
            for (const auto& c : sweep.per_image) per_image[c.label] = eval::to_json(c);
            report["per_image"] = per_image;
            report["skipped"] = sweep.skipped;
            report["bpp_inversions"] = sweep.average.bpp_inversions();
            if (sweep.average.psnr_inversions() > 0)
                std::cerr << "warning: PSNR decreases with bpp at " << sweep.average.psnr_inversions() << " points\n";
            json bd = json::object();
            std::vector<eval::RDCurve> curves{sweep.average};
            for (const auto& a : ev_anchors) {
                auto anchor = eval::curve_from_json(read_json(a));
                if (anchor.label.empty()) anchor.label = a.stem().string();
                json entry{{"average", eval::bd_rate(anchor, sweep.average)}};
                json per = json::object();
                for (const auto& c : sweep.per_image) {
                    try {
                        per[c.label] = eval::bd_rate(anchor, c);
                    } catch (const Error& e) {
                        per[c.label] = nullptr;
                    }
                }
                entry["per_image"] = per;
                bd[anchor.label] = entry;
                curves.push_back(anchor);
            }
            report["bd_rate_vs"] = bd;
            std::vector<std::string> unc;
            eval::ComplexityReport cr;
            cr.params_total = model->parameter_count();
            const auto mb = eval::macs_breakdown(*model, 256, 256, unc);
            cr.macs_per_pixel = mb.per_pixel;
            cr.macs_fixed = mb.fixed;
            cr.uncounted = unc;
            report["complexity"] = eval::to_json(cr);
            if (ev_svg) write_text_atomic(*ev_svg, eval::rd_svg(curves, sweep.average.label));
            write_json(ev_json, report);
            if (ev_json)
                for (const auto& p : sweep.average.points)
                    std::cout << "gain " << p.gain << " bpp " << p.bpp << " psnr " << p.psnr << "\n";
        } else if (bd->parsed()) {
            const auto a = eval::curve_from_json(read_json(bd_anchor));
            const auto t = eval::curve_from_json(read_json(bd_test));
            std::cout << std::setprecision(6) << "bd_rate " << eval::bd_rate(a, t) << " %\n";
        } else if (corr->parsed()) {
            const auto model = load_checkpoint(co_model).model;
            const auto view = model->analyze_latent(io::read_image(co_image), resolve_gain(*model, co_gain, co_index));
            const auto map = analysis::latent_correlation(view.y_hat, view.params, co_k);
            write_json(co_json, analysis::to_json(map));
            if (co_json) std::cout << "avg_rho " << analysis::avg_rho(map) << "\n";
        } else if (bits->parsed()) {
            const auto model = load_checkpoint(bm_model).model;
            const Tensor x = io::read_image(bm_image);
            const auto view = model->analyze_latent(x, resolve_gain(*model, bm_gain, bm_index));
            const auto map = analysis::bits_allocation_map(view.y_hat, view.params);
            analysis::export_heatmap(map, bm_out, bm_scale);
            json j = analysis::to_json(map);
            j["bits_z"] = view.bits_z;
            j["bpp"] = (map.total + view.bits_z) / (static_cast<double>(x.height()) * x.width());
            if (bm_json) write_json(bm_json, j);
            std::cout << "total_bits " << map.total << " bpp " << j["bpp"].get<double>() << "\n";
        } else if (cx->parsed()) {
            std::unique_ptr<CompressionModel> model;
            if (cx_model) model = load_checkpoint(*cx_model).model;
            else model = std::make_unique<CompressionModel>(cx_flags.config(seed));
            std::vector<std::string> unc;
            eval::ComplexityReport r;
            r.params_total = eval::count_params(*model);
            const auto mb = eval::macs_breakdown(*model, cx_h, cx_w, unc);
            r.macs_per_pixel = mb.per_pixel;
            r.macs_fixed = mb.fixed;
            r.uncounted = unc;
            for (const auto& u : unc) std::cerr << "warning: no MAC rule for layer kind " << u << "\n";
            write_json(cx_json, eval::to_json(r));
        } else if (bench->parsed()) {
            const auto model = load_checkpoint(be_model).model;
            std::vector<Tensor> images;
            for (const auto& p : io::list_images(be_images)) images.push_back(io::read_image(p));
            const double g = resolve_gain(*model, be_gain, std::nullopt);
            const auto lat = eval::latency_benchmark(*model, images, be_repeats, g);
            std::vector<std::string> unc;
            eval::ComplexityReport r;
            r.params_total = model->parameter_count();
            const auto mb = eval::macs_breakdown(*model, 256, 256, unc);
            r.macs_per_pixel = mb.per_pixel;
            r.macs_fixed = mb.fixed;
            r.enc_seconds = lat.enc_seconds;
            r.dec_seconds = lat.dec_seconds;
            r.uncounted = unc;
            json j = eval::to_json(r);
            j["samples"] = lat.samples;
            write_json(be_json, j);
        }
    } catch (const DecodeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == DecodeError::Kind::ModelMismatch ? kMismatch : kData;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const LookupError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kOk;
}
