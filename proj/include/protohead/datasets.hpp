#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "protohead/tensor.hpp"

namespace protohead {

/// Raised on malformed manifests or binary archives; messages carry the byte
/// offset or line that failed.
struct ArchiveError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ImageShape {
    int channels = 3;
    int height = 16;
    int width = 16;

    int numel() const { return channels * height * width; }
    bool operator==(const ImageShape&) const = default;
};

/// One image with its label. Pixels are channel-major, row-major doubles.
/// Labels are global class ids in a SourceDataset and local indices in a
/// TaskDataset.
struct Sample {
    int label = 0;
    std::vector<double> pixels;
};

/// Per-channel mean and standard deviation; stddev is clamped from below so
/// constant channels stay finite under normalization.
struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

inline constexpr double kStdClamp = 1e-6;

struct SourceDataset {
    ImageShape shape;
    std::vector<std::string> class_names;
    std::vector<Sample> train;
    std::vector<Sample> test;
};

/// One task of a continual sequence. class_ids maps local label -> global
/// class id; stats are computed from this task's train split.
struct TaskDataset {
    int task_id = 0;
    std::vector<int> class_ids;
    ImageShape shape;
    std::vector<Sample> train;
    std::vector<Sample> test;
    ChannelStats stats;
};

struct SplitSpec {
    int num_tasks = 5;
    int classes_per_task = 4;
    std::uint64_t shuffle_seed = 1;
};

struct SyntheticSpec {
    int num_tasks = 5;
    int classes_per_task = 4;
    int train_per_class = 100;
    int test_per_class = 40;
    ImageShape shape{3, 16, 16};
    double noise = 0.25;
    std::uint64_t seed = 1;
};

ChannelStats compute_channel_stats(const std::vector<Sample>& samples, const ImageShape& shape);
std::vector<double> normalize_pixels(const std::vector<double>& pixels, const ImageShape& shape,
                                     const ChannelStats& stats);

/// Partitions a source dataset into tasks: global classes are shuffled by the
/// seed and chunked into num_tasks groups of classes_per_task. Every source
/// sample lands in exactly one task; the class count must divide exactly.
std::vector<TaskDataset> split_dataset(const SourceDataset& source, const SplitSpec& spec);

/// Deterministic toy data: each class is an isotropic Gaussian around its own
/// template drawn uniformly per pixel. noise = 0 reproduces the templates
/// exactly.
std::vector<TaskDataset> make_synthetic_tasks(const SyntheticSpec& spec);

/// Reads a manifest plus the binary record files it names. Record layout is
/// one unsigned label byte followed by channels*height*width pixel bytes,
/// channel-major row-major; pixels map to doubles as b / 255.
SourceDataset load_image_archive(const std::string& manifest_path);

/// Writes `source` in the archive format under dir as <name>.manifest,
/// <name>_train.bin and <name>_test.bin; pixels are rounded to bytes.
void write_image_archive(const SourceDataset& source, const std::string& dir,
                         const std::string& name);

/// Audit table: one row per (task, class) with local label and split counts.
void write_split_csv(const std::vector<TaskDataset>& tasks, const std::string& path);

}  // namespace protohead
