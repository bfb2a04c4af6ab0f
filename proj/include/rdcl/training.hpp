#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rdcl/core/rng.hpp"
#include "rdcl/core/tensor.hpp"
#include "rdcl/model.hpp"

namespace rdcl::train {

/// R + lambda * D with R = total_bits / n_pixels and D = 255^2 * mse.
/// Throws TrainingError for non-finite inputs.
double rd_loss(const Tensor& x, const Tensor& x_hat, double total_bits, double n_pixels, double lambda);

enum class LambdaPolicy { fixed, uniform };

struct Phase {
    LambdaPolicy policy = LambdaPolicy::fixed;
    double lambda = 1.44;  // used by the fixed policy
    QuantizerMode quantizer = QuantizerMode::noise;
    int epochs = 1;

    bool operator==(const Phase&) const = default;
};

struct PhaseSchedule {
    std::vector<Phase> phases;
    int batch_size = 32;
    double initial_lr = 2e-4;
    int plateau_patience = 10;
    double plateau_factor = 0.5;
    double plateau_threshold = 1e-4;
    bool reset_lr_each_phase = true;
    double clip_norm = 1.0;
    int crop = 256;
    double val_fraction = 0.05;

    int total_epochs() const;
    /// Throws ConfigError for empty phases, non-positive epochs or sizes.
    void validate() const;
    bool operator==(const PhaseSchedule&) const = default;
};

/// (1.44, noise, 100), (uniform, noise, 80), (uniform, ste, 70); batch 32,
/// lr 2e-4, plateau patience 10 and factor 0.5, lr reset per phase.
PhaseSchedule default_schedule();
/// Epochs of every phase divided by `divisor`, rounded up.
PhaseSchedule scaled_schedule(const PhaseSchedule& base, int divisor);
/// default_schedule scaled by 1/20: (5, 4, 4) epochs.
PhaseSchedule desk_schedule();

nlohmann::json to_json(const PhaseSchedule& s);
/// Missing fields keep their defaults; throws ConfigError on bad values.
PhaseSchedule schedule_from_json(const nlohmann::json& j, const PhaseSchedule& base = default_schedule());

/// Training images held as 8-bit RGB.
class Dataset {
public:
    struct Image {
        std::string name;
        int height = 0;
        int width = 0;
        std::vector<std::uint8_t> rgb;  // planar [3,H,W]
    };

    Dataset() = default;

    /// Reads every PNG/PPM in `dir`. Images smaller than `min_side` in
    /// either dimension are skipped with a warning; throws DataError when
    /// nothing usable remains.
    static Dataset load(const std::filesystem::path& dir, int min_side, std::vector<std::string>* skipped = nullptr);
    /// Quantizes tensors in [0,1] to 8 bits.
    static Dataset from_tensors(const std::vector<Tensor>& images);

    void add(Image image) { images_.push_back(std::move(image)); }
    std::size_t size() const { return images_.size(); }
    bool empty() const { return images_.empty(); }
    const Image& at(std::size_t i) const { return images_[i]; }

    /// [3,h,w] window at (top, left), values in [0,1].
    Tensor crop(std::size_t index, int top, int left, int h, int w) const;
    Tensor full(std::size_t index) const;

    /// Deterministic split: a seeded shuffle, then ceil(fraction * n)
    /// images (at least one when n > 1) go to the second set.
    std::pair<Dataset, Dataset> split(double fraction, std::uint64_t seed) const;

private:
    std::vector<Image> images_;
};

struct TrainBatch {
    std::vector<Tensor> crops;  // [3,crop,crop] each, in [0,1]
    std::vector<std::size_t> source_ids;
    std::vector<std::pair<int, int>> offsets;  // (top, left) of each crop
};

/// Random crops for one pass over the dataset: images in a seeded random
/// order, crop offsets uniform over [0, H - crop] x [0, W - crop].
class CropStream {
public:
    CropStream(const Dataset& data, int crop, int batch_size, std::uint64_t seed);

    /// Next batch of the current epoch; empty at the end of the epoch.
    std::optional<TrainBatch> next();
    /// Starts another epoch with fresh order and offsets.
    void new_epoch();
    std::size_t batches_per_epoch() const;

private:
    const Dataset& data_;
    int crop_, batch_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

/// Per-epoch record, also written as one JSON line.
struct EpochLog {
    int phase = 0;
    int epoch = 0;  // within the phase
    double loss = 0.0;
    double bpp = 0.0;
    double psnr = 0.0;
    double lr = 0.0;
    double val_loss = 0.0;
    double val_bpp = 0.0;
    double val_psnr = 0.0;
    std::size_t steps = 0;
    double seconds = 0.0;
    bool lr_reduced = false;
};
nlohmann::json to_json(const EpochLog& log);

/// What one optimizer step was trained with.
struct StepProbe {
    int phase = 0;
    std::size_t step = 0;
    double lambda = 0.0;
    std::size_t gain_index = 0;
    QuantizerMode quantizer = QuantizerMode::noise;
};

struct TrainOptions {
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> checkpoint;  // written after every epoch
    std::optional<std::filesystem::path> log_path;    // JSON lines, appended
    std::function<void(const EpochLog&)> on_epoch;
    std::function<void(const StepProbe&)> on_step;
    /// Caps the optimizer steps per epoch (0: one full pass).
    std::size_t max_steps_per_epoch = 0;
};

/// Runs the phases of a schedule on a model with Adam, global-norm
/// clipping and a plateau scheduler on the validation loss at lambda_ref.
class Trainer {
public:
    Trainer(CompressionModel& model, PhaseSchedule schedule, const Dataset& train, const Dataset& validation,
            TrainOptions options);
    ~Trainer();

    /// Restores optimizer moments and the phase/epoch position.
    void resume(const TrainingState& state);

    /// Trains phase `index` from its first epoch (or the resumed one).
    std::vector<EpochLog> run_phase(std::size_t index);
    /// All remaining phases. On divergence the last good weights are
    /// restored (and written to the checkpoint path, if any) before the
    /// TrainingError propagates.
    std::vector<EpochLog> train_full();

    /// Mean evaluate() loss over the validation set at lambda_ref.
    RDTerms validate() const;

    const nn::Adam& optimizer() const;
    TrainingState state() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace rdcl::train
