#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bikit::pipeline {

// ---------------------------------------------------------------------------
// Image preprocessing
// ---------------------------------------------------------------------------

struct PreprocessSpec {
    enum class Mode { Train, Eval };

    int target_side = 224;
    /// Shorter side after the initial resize. 256 is the ImageNet
    /// central-crop convention (224 / 0.875); configurable.
    int resize_side = 256;
    double max_rotation_deg = 30.0;
    double hflip_prob = 0.5;
    double vflip_prob = 0.5;
    std::array<double, 3> mean = {0.485, 0.456, 0.406};
    std::array<double, 3> stddev = {0.229, 0.224, 0.225};
    Mode mode = Mode::Eval;

    void validate() const;
};

/// 8-bit RGB image, interleaved rows (H x W x 3).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

/// Planar float tensor, channels x height x width.
struct ImageTensor {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

/// Train mode: resize (shorter side, bilinear) -> center-crop -> seeded
/// rotation in [-max_rotation, +max_rotation] (out-of-bounds filled with
/// the per-channel mean of the crop) -> seeded h/v flips -> per-channel
/// normalization (v/255 - mean)/std. Eval mode skips rotation and flips
/// and ignores the seed. Output is always 3 x target x target.
ImageTensor preprocess(const Image& image, const PreprocessSpec& spec, std::uint64_t seed);

Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& image, const std::filesystem::path& path);

/// Binary tensor container: magic "BKT1", little-endian int32 c,h,w, then
/// float32 data in CHW order.
void write_tensor(const ImageTensor& tensor, const std::filesystem::path& path);
ImageTensor read_tensor(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Learning-rate schedules
// ---------------------------------------------------------------------------

enum class SchedulerKind { ConstantWithWarmup, CosineWithWarmup };

std::string to_string(SchedulerKind k);
SchedulerKind scheduler_from_string(std::string_view s);

struct LrSchedule {
    SchedulerKind kind = SchedulerKind::ConstantWithWarmup;
    double base_lr = 0.0;
    std::int64_t total_steps = 0;
    double warmup_fraction = 0.1;

    void validate() const;
    /// Warmup length in steps, rounded half-up.
    std::int64_t warmup_steps() const;
};

/// Learning rate at `step` in [0, total_steps]. Linear ramp to base_lr
/// over the warmup window; then constant, or cosine decay to zero.
double lr_at(const LrSchedule& schedule, std::int64_t step);

// ---------------------------------------------------------------------------
// Transfer-learning plans
// ---------------------------------------------------------------------------

enum class Strategy { HO, HTA, DHB };

std::string to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct ParamPolicy {
    bool trainable = false;
    double lr = 0.0; // meaningful only when trainable

    bool operator==(const ParamPolicy&) const = default;
};

struct Stage {
    ParamPolicy base;
    ParamPolicy head;
    SchedulerKind scheduler = SchedulerKind::ConstantWithWarmup;
    int max_epochs = 100;
    /// Early stopping monitors validation loss with this patience.
    int early_stop_patience = 10;

    bool operator==(const Stage&) const = default;
};

struct HyperParams {
    int hidden_layer = 0;
    int batch_size = 0;
    double dropout = 0.0;
    double weight_decay = 0.0;

    bool operator==(const HyperParams&) const = default;
};

struct TrainPlan {
    Strategy strategy = Strategy::HO;
    std::vector<Stage> stages;
    HyperParams hyperparams;

    /// Enforces the structural shape of each strategy (HO: one stage with
    /// frozen base; HTA: two stages, the first an HO stage; DHB: one stage
    /// with independent base/head rates).
    void validate() const;

    bool operator==(const TrainPlan&) const = default;
};

struct LrSpec {
    std::optional<double> head_lr;   // HO stage / HTA stage 1
    std::optional<double> stage2_lr; // HTA stage 2, all parameters
    std::optional<double> base_lr;   // DHB base
};

TrainPlan make_plan(Strategy strategy, const HyperParams& hp, const LrSpec& lrs,
                    SchedulerKind scheduler, std::vector<std::string>* warnings = nullptr);

nlohmann::json plan_to_json(const TrainPlan& plan);
TrainPlan plan_from_json(const nlohmann::json& j);
void save_plan(const TrainPlan& plan, const std::filesystem::path& path);
TrainPlan load_plan(const std::filesystem::path& path);

/// Published best settings for a (dataset, model) pair: the tuned
/// hyperparameters plus the follow-up learning rates.
struct Preset {
    HyperParams hp;
    SchedulerKind scheduler;
    double ho_lr;
    double hta_stage2_lr;
    double dhb_head_lr;
    double dhb_base_lr;
    /// Set when the recorded values are internally inconsistent with the
    /// announced search space; stored verbatim, surfaced as a note.
    std::optional<std::string> note;
};

/// Presets keyed by dataset ("mcds" | "codebrim") and model tag
/// ("rn" | "en" | "mn"). Throws Error("unknown-preset") otherwise.
const Preset& preset_for(std::string_view dataset, std::string_view model);

TrainPlan plan_from_preset(Strategy strategy, std::string_view dataset, std::string_view model,
                           std::vector<std::string>* warnings = nullptr);

} // namespace bikit::pipeline
