#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace protohead {

/// Raised on malformed config text, unknown keys, or invalid field values.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Config files are line-oriented `section.key = value` pairs; `#` starts a
// comment, blank lines are skipped. Every field has a default, so an empty
// config is runnable. Unknown keys are errors. The full grammar is documented
// in the README.

struct DatasetConfig {
    std::string kind = "synthetic";  // synthetic | archive
    std::string archive_manifest;    // required when kind == archive
    int num_tasks = 5;
    int classes_per_task = 4;
    int train_per_class = 100;
    int test_per_class = 40;
    int image_channels = 3;
    int image_height = 16;
    int image_width = 16;
    double noise = 0.25;
    std::uint64_t shuffle_seed = 1;  // class-to-task assignment for archives

    bool operator==(const DatasetConfig&) const = default;
};

struct ModelDims {
    int feature_dim = 64;
    std::vector<int> hidden{256};
    int hypernet_hidden = 128;
    int proto_height = 10;
    int proto_width = 10;

    bool operator==(const ModelDims&) const = default;
};

struct LossConfig {
    double stability = 0.5;
    double sp_weight = 1.0;
    double temperature = 1.0;
    std::string proto_teacher = "live";  // live | frozen

    bool operator==(const LossConfig&) const = default;
};

struct OptimConfig {
    std::string kind = "adam";  // adam | sgd
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double proto_lr = 1e-3;

    bool operator==(const OptimConfig&) const = default;
};

struct TrainConfig {
    int epochs = 20;
    int batch_size = 32;

    bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
    DatasetConfig dataset;
    ModelDims model;
    std::string proto_init = "semantic";  // semantic | random
    LossConfig loss;
    OptimConfig optim;
    TrainConfig train;
    std::uint64_t seed = 1;
    std::string output_dir = "runs/out";

    bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& cfg);
RunConfig load_config_file(const std::string& path);

/// Ablation axes the sweep runner understands.
enum class SweepAxis { ProtoShape, Stability, SpWeight, Init };

std::optional<SweepAxis> parse_axis(const std::string& name);
const char* axis_name(SweepAxis axis);

/// Copy of `base` with one axis overridden; the value string uses the same
/// syntax as the corresponding config field.
RunConfig apply_axis(const RunConfig& base, SweepAxis axis, const std::string& value);

}  // namespace protohead
