#include "rdcl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include "rdcl/evaluation.hpp"
#include "rdcl/io/image.hpp"
#include "rdcl/nn/optim.hpp"

namespace rdcl::train {

using nlohmann::json;

double rd_loss(const Tensor& x, const Tensor& x_hat, double total_bits, double n_pixels, double lambda) {
    if (!std::isfinite(total_bits) || !std::isfinite(n_pixels) || !std::isfinite(lambda))
        throw TrainingError("rd_loss: non-finite input (bits " + std::to_string(total_bits) + ", pixels " +
                            std::to_string(n_pixels) + ", lambda " + std::to_string(lambda) + ")");
    if (!(n_pixels > 0.0)) throw ContractError("rd_loss: pixel count must be positive");
    require_same_shape(x, x_hat, "rd_loss");
    double sq = 0.0;
    std::size_t bad = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(x_hat[i])) {
            ++bad;
            continue;
        }
        const double d = static_cast<double>(x[i]) - x_hat[i];
        sq += d * d;
    }
    if (bad) throw TrainingError("rd_loss: " + std::to_string(bad) + " non-finite pixel values");
    const double mse = x.empty() ? 0.0 : sq / static_cast<double>(x.size());
    return total_bits / n_pixels + lambda * 255.0 * 255.0 * mse;
}

// ------------------------------------------------------------- schedule

int PhaseSchedule::total_epochs() const {
    int n = 0;
    for (const auto& p : phases) n += p.epochs;
    return n;
}

void PhaseSchedule::validate() const {
    if (phases.empty()) throw ConfigError("schedule has no phases");
    for (const auto& p : phases) {
        if (p.epochs <= 0) throw ConfigError("phase epochs must be positive");
        if (p.policy == LambdaPolicy::fixed && !(p.lambda > 0.0)) throw ConfigError("fixed lambda must be positive");
    }
    if (batch_size <= 0 || crop <= 0 || crop % transforms::kImageAlign != 0)
        throw ConfigError("batch size must be positive and crop a positive multiple of 64");
    if (!(initial_lr > 0.0) || plateau_patience < 0 || !(plateau_factor > 0.0 && plateau_factor < 1.0))
        throw ConfigError("invalid learning-rate settings");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("validation fraction must be in (0,1)");
    if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
}

PhaseSchedule default_schedule() {
    PhaseSchedule s;
    s.phases = {{LambdaPolicy::fixed, 1.44, QuantizerMode::noise, 100},
                {LambdaPolicy::uniform, 0.0, QuantizerMode::noise, 80},
                {LambdaPolicy::uniform, 0.0, QuantizerMode::ste, 70}};
    return s;
}

PhaseSchedule scaled_schedule(const PhaseSchedule& base, int divisor) {
    if (divisor < 1) throw ConfigError("schedule divisor must be positive");
    PhaseSchedule s = base;
    for (auto& p : s.phases) p.epochs = (p.epochs + divisor - 1) / divisor;
    return s;
}

PhaseSchedule desk_schedule() { return scaled_schedule(default_schedule(), 20); }

json to_json(const PhaseSchedule& s) {
    json phases = json::array();
    for (const auto& p : s.phases) {
        json j{{"lambda_policy", p.policy == LambdaPolicy::fixed ? "fixed" : "uniform"},
               {"quantizer", to_string(p.quantizer)},
               {"epochs", p.epochs}};
        if (p.policy == LambdaPolicy::fixed) j["lambda"] = p.lambda;
        phases.push_back(j);
    }
    return {{"phases", phases},
            {"batch_size", s.batch_size},
            {"initial_lr", s.initial_lr},
            {"plateau_patience", s.plateau_patience},
            {"plateau_factor", s.plateau_factor},
            {"plateau_threshold", s.plateau_threshold},
            {"reset_lr_each_phase", s.reset_lr_each_phase},
            {"clip_norm", s.clip_norm},
            {"crop", s.crop},
            {"val_fraction", s.val_fraction}};
}

PhaseSchedule schedule_from_json(const json& j, const PhaseSchedule& base) {
    PhaseSchedule s = base;
    try {
        if (j.contains("phases")) {
            s.phases.clear();
            for (const auto& p : j.at("phases")) {
                Phase ph;
                const auto policy = p.value("lambda_policy", std::string("uniform"));
                if (policy == "fixed") ph.policy = LambdaPolicy::fixed;
                else if (policy == "uniform") ph.policy = LambdaPolicy::uniform;
                else throw ConfigError("unknown lambda policy '" + policy + "'");
                ph.lambda = p.value("lambda", ph.policy == LambdaPolicy::fixed ? 1.44 : 0.0);
                ph.quantizer = parse_quantizer(p.value("quantizer", std::string("noise")));
                ph.epochs = p.at("epochs").get<int>();
                s.phases.push_back(ph);
            }
        }
        s.batch_size = j.value("batch_size", s.batch_size);
        s.initial_lr = j.value("initial_lr", s.initial_lr);
        s.plateau_patience = j.value("plateau_patience", s.plateau_patience);
        s.plateau_factor = j.value("plateau_factor", s.plateau_factor);
        s.plateau_threshold = j.value("plateau_threshold", s.plateau_threshold);
        s.reset_lr_each_phase = j.value("reset_lr_each_phase", s.reset_lr_each_phase);
        s.clip_norm = j.value("clip_norm", s.clip_norm);
        s.crop = j.value("crop", s.crop);
        s.val_fraction = j.value("val_fraction", s.val_fraction);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("training config: ") + e.what());
    }
    s.validate();
    return s;
}

// -------------------------------------------------------------- dataset

Dataset Dataset::load(const std::filesystem::path& dir, int min_side, std::vector<std::string>* skipped) {
    Dataset d;
    for (const auto& path : io::list_images(dir)) {
        Tensor t;
        try {
            t = io::read_image(path);
        } catch (const DataError& e) {
            std::cerr << "warning: skipping " << path.string() << ": " << e.what() << "\n";
            if (skipped) skipped->push_back(path.string());
            continue;
        }
        if (t.height() < min_side || t.width() < min_side) {
            std::cerr << "warning: skipping " << path.string() << ": smaller than " << min_side << " pixels\n";
            if (skipped) skipped->push_back(path.string());
            continue;
        }
        Image im{path.filename().string(), t.height(), t.width(), std::vector<std::uint8_t>(t.size())};
        for (std::size_t i = 0; i < t.size(); ++i) im.rgb[i] = io::to_byte(t[i]);
        d.add(std::move(im));
    }
    if (d.empty()) throw DataError("no usable training images in " + dir.string());
    return d;
}

Dataset Dataset::from_tensors(const std::vector<Tensor>& images) {
    Dataset d;
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Tensor& t = images[n];
        if (t.channels() != 3) throw ContractError("dataset images must be RGB");
        Image im{"image" + std::to_string(n), t.height(), t.width(), std::vector<std::uint8_t>(t.size())};
        for (std::size_t i = 0; i < t.size(); ++i) im.rgb[i] = io::to_byte(t[i]);
        d.add(std::move(im));
    }
    return d;
}

Tensor Dataset::crop(std::size_t index, int top, int left, int h, int w) const {
    const Image& im = images_.at(index);
    if (top < 0 || left < 0 || top + h > im.height || left + w > im.width)
        throw ContractError("dataset crop outside the image");
    Tensor out(3, h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y) {
            const std::uint8_t* src = im.rgb.data() + (static_cast<std::size_t>(c) * im.height + top + y) * im.width + left;
            float* dst = out.channel(c) + static_cast<std::size_t>(y) * w;
            for (int x = 0; x < w; ++x) dst[x] = static_cast<float>(src[x]) / 255.0f;
        }
    return out;
}

Tensor Dataset::full(std::size_t index) const {
    const Image& im = images_.at(index);
    return crop(index, 0, 0, im.height, im.width);
}

namespace {

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

std::pair<Dataset, Dataset> Dataset::split(double fraction, std::uint64_t seed) const {
    std::vector<std::size_t> idx(images_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    shuffle(idx, rng);
    std::size_t n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size())));
    if (idx.size() > 1) n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
    else n_val = 0;
    Dataset train, val;
    for (std::size_t i = 0; i < idx.size(); ++i) (i < n_val ? val : train).add(images_[idx[i]]);
    return {std::move(train), std::move(val)};
}

CropStream::CropStream(const Dataset& data, int crop, int batch_size, std::uint64_t seed)
    : data_(data), crop_(crop), batch_(batch_size), rng_(seed) {
    if (data.empty()) throw DataError("crop stream: empty dataset");
    if (crop < 1 || batch_size < 1) throw ContractError("crop stream: crop and batch size must be positive");
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data.at(i).height < crop || data.at(i).width < crop)
            throw DataError("crop stream: image " + data.at(i).name + " is smaller than the crop");
    new_epoch();
}

void CropStream::new_epoch() {
    order_.resize(data_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    shuffle(order_, rng_);
    pos_ = 0;
}

std::size_t CropStream::batches_per_epoch() const {
    return (data_.size() + static_cast<std::size_t>(batch_) - 1) / static_cast<std::size_t>(batch_);
}

std::optional<TrainBatch> CropStream::next() {
    if (pos_ >= order_.size()) return std::nullopt;
    TrainBatch b;
    for (int k = 0; k < batch_ && pos_ < order_.size(); ++k, ++pos_) {
        const std::size_t id = order_[pos_];
        const auto& im = data_.at(id);
        const int top = static_cast<int>(rng_.below(static_cast<std::uint64_t>(im.height - crop_ + 1)));
        const int left = static_cast<int>(rng_.below(static_cast<std::uint64_t>(im.width - crop_ + 1)));
        b.crops.push_back(data_.crop(id, top, left, crop_, crop_));
        b.source_ids.push_back(id);
        b.offsets.emplace_back(top, left);
    }
    return b;
}

json to_json(const EpochLog& l) {
    return {{"phase", l.phase},       {"epoch", l.epoch},       {"loss", l.loss},         {"bpp", l.bpp},
            {"psnr", l.psnr},         {"lr", l.lr},             {"val_loss", l.val_loss}, {"val_bpp", l.val_bpp},
            {"val_psnr", l.val_psnr}, {"steps", l.steps},       {"seconds", l.seconds},   {"lr_reduced", l.lr_reduced}};
}

// -------------------------------------------------------------- trainer

struct Trainer::Impl {
    CompressionModel& model;
    PhaseSchedule schedule;
    const Dataset& train;
    const Dataset& val;
    TrainOptions options;
    nn::Adam adam;
    nn::PlateauScheduler plateau;
    std::vector<Tensor> val_crops;
    std::size_t ref_index;
    int start_phase = 0;
    int start_epoch = 0;
    std::size_t global_step = 0;
    std::vector<std::uint8_t> last_good;

    Impl(CompressionModel& m, PhaseSchedule s, const Dataset& t, const Dataset& v, TrainOptions o)
        : model(m), schedule(std::move(s)), train(t), val(v), options(std::move(o)),
          adam(m.params(), nn::AdamConfig{schedule.initial_lr}),
          plateau(schedule.plateau_patience, schedule.plateau_factor, schedule.plateau_threshold),
          ref_index(m.config().grid.index_of(m.config().grid.lambda_ref)) {
        schedule.validate();
        if (train.empty()) throw DataError("training set is empty");
        for (std::size_t i = 0; i < val.size(); ++i) {
            const auto& im = val.at(i);
            const int h = std::min(im.height, schedule.crop) / transforms::kImageAlign * transforms::kImageAlign;
            const int w = std::min(im.width, schedule.crop) / transforms::kImageAlign * transforms::kImageAlign;
            if (h == 0 || w == 0) continue;
            val_crops.push_back(val.crop(i, (im.height - h) / 2, (im.width - w) / 2, h, w));
        }
    }

    TrainingState state(int phase, int epoch) const {
        TrainingState st;
        st.phase = phase;
        st.epoch = epoch;
        st.optimizer = OptimizerState{static_cast<std::size_t>(adam.steps()), adam.lr(), adam.state()};
        return st;
    }

    void restore_last_good() {
        if (last_good.empty()) return;
        auto loaded = parse_checkpoint(last_good);
        auto dst = model.params();
        auto src = loaded.model->params();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
        if (options.checkpoint) io::write_file_atomic(*options.checkpoint, last_good);
    }

    RDTerms validate() const {
        RDTerms mean;
        if (val_crops.empty()) return mean;
        const double lambda = model.config().grid.lambda_ref;
        const double gain = model.gain(ref_index);
        for (const Tensor& x : val_crops) {
            const RDTerms t = model.evaluate(x, gain, lambda);
            mean.loss += t.loss;
            mean.bpp += t.bpp;
            mean.psnr += t.psnr;
            mean.mse += t.mse;
        }
        const double n = static_cast<double>(val_crops.size());
        mean.loss /= n, mean.bpp /= n, mean.psnr /= n, mean.mse /= n;
        return mean;
    }

    EpochLog run_epoch(int phase_index, int epoch, CropStream& stream, Rng& rng) {
        const Phase& phase = schedule.phases[static_cast<std::size_t>(phase_index)];
        const auto& grid = model.config().grid;
        const std::size_t fixed_index = phase.policy == LambdaPolicy::fixed ? grid.index_of(phase.lambda) : 0;
        const auto t0 = std::chrono::steady_clock::now();
        EpochLog log;
        log.phase = phase_index;
        log.epoch = epoch;
        std::size_t samples = 0;
        auto params = model.params();
        stream.new_epoch();
        while (auto batch = stream.next()) {
            if (options.max_steps_per_epoch && log.steps >= options.max_steps_per_epoch) break;
            const std::size_t gi =
                phase.policy == LambdaPolicy::fixed ? fixed_index : static_cast<std::size_t>(rng.below(grid.size()));
            const double lambda = grid.values[gi];
            if (options.on_step) options.on_step({phase_index, global_step, lambda, gi, phase.quantizer});
            adam.zero_grad();
            const double scale = 1.0 / static_cast<double>(batch->crops.size());
            for (const Tensor& x : batch->crops) {
                const RDTerms t = model.train_step(x, gi, lambda, phase.quantizer, rng, scale);
                log.loss += t.loss;
                log.bpp += t.bpp;
                log.psnr += t.psnr;
                ++samples;
            }
            const double norm = nn::clip_grad_norm(params, schedule.clip_norm);
            if (!std::isfinite(norm)) throw TrainingError("gradient norm is not finite");
            adam.step();
            model.clamp_gains();
            ++log.steps;
            ++global_step;
        }
        if (samples) {
            log.loss /= static_cast<double>(samples);
            log.bpp /= static_cast<double>(samples);
            log.psnr /= static_cast<double>(samples);
        }
        const RDTerms v = validate();
        log.val_loss = v.loss;
        log.val_bpp = v.bpp;
        log.val_psnr = v.psnr;
        log.lr = adam.lr();
        if (!val_crops.empty()) log.lr_reduced = plateau.observe(v.loss, adam);
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(log.loss) || !std::isfinite(log.val_loss)) throw TrainingError("epoch loss is not finite");
        return log;
    }

    void record(const EpochLog& log) {
        if (options.log_path) {
            std::ofstream out(*options.log_path, std::ios::app);
            if (!out) throw DataError("cannot append to log " + options.log_path->string());
            out << to_json(log).dump() << "\n";
        }
        if (options.on_epoch) options.on_epoch(log);
    }

    std::vector<EpochLog> run_phase(std::size_t index) {
        if (index >= schedule.phases.size()) throw ContractError("phase index out of range");
        const int phase_index = static_cast<int>(index);
        int first_epoch = 0;
        if (phase_index == start_phase && start_epoch > 0) {
            first_epoch = start_epoch;
        } else if (schedule.reset_lr_each_phase || phase_index == 0) {
            adam.set_lr(schedule.initial_lr);
            plateau.reset();
        }
        std::vector<EpochLog> logs;
        if (last_good.empty()) last_good = serialize_checkpoint(model, state(phase_index, first_epoch));
        for (int e = first_epoch; e < schedule.phases[index].epochs; ++e) {
            const std::uint64_t epoch_seed = options.seed * 1000003ULL + static_cast<std::uint64_t>(phase_index) * 1009ULL +
                                             static_cast<std::uint64_t>(e);
            Rng rng(epoch_seed);
            CropStream stream(train, schedule.crop, schedule.batch_size, rng.fork_seed());
            EpochLog log;
            try {
                log = run_epoch(phase_index, e, stream, rng);
            } catch (const TrainingError&) {
                restore_last_good();
                throw;
            }
            const bool phase_done = e + 1 == schedule.phases[index].epochs;
            last_good = serialize_checkpoint(model, phase_done ? state(phase_index + 1, 0) : state(phase_index, e + 1));
            if (options.checkpoint) io::write_file_atomic(*options.checkpoint, last_good);
            record(log);
            logs.push_back(log);
        }
        start_epoch = 0;
        start_phase = phase_index + 1;
        return logs;
    }
};

Trainer::Trainer(CompressionModel& model, PhaseSchedule schedule, const Dataset& train, const Dataset& validation,
                 TrainOptions options)
    : impl_(std::make_unique<Impl>(model, std::move(schedule), train, validation, std::move(options))) {}

Trainer::~Trainer() = default;

void Trainer::resume(const TrainingState& state) {
    impl_->start_phase = state.phase;
    impl_->start_epoch = state.epoch;
    if (state.optimizer) {
        impl_->adam.load_state(static_cast<std::int64_t>(state.optimizer->steps), state.optimizer->moments);
        impl_->adam.set_lr(state.optimizer->lr);
    }
}

std::vector<EpochLog> Trainer::run_phase(std::size_t index) { return impl_->run_phase(index); }

std::vector<EpochLog> Trainer::train_full() {
    std::vector<EpochLog> all;
    for (std::size_t p = static_cast<std::size_t>(std::max(0, impl_->start_phase)); p < impl_->schedule.phases.size(); ++p) {
        auto logs = impl_->run_phase(p);
        all.insert(all.end(), logs.begin(), logs.end());
    }
    return all;
}

RDTerms Trainer::validate() const { return impl_->validate(); }

const nn::Adam& Trainer::optimizer() const { return impl_->adam; }

TrainingState Trainer::state() const { return impl_->state(impl_->start_phase, impl_->start_epoch); }

}  // namespace rdcl::train
