#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "protohead/config.hpp"
#include "protohead/metrics.hpp"
#include "protohead/trainer.hpp"

namespace protohead {

/// Raised when artifacts cannot be written or read back.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const char* version_string();

/// Environment variable that, when set, prefixes relative output dirs.
inline constexpr const char* kOutputRootEnv = "PROTOHEAD_OUTPUT_ROOT";

std::filesystem::path resolve_output_dir(const RunConfig& cfg);

/// Everything one run produces in memory.
struct RunRecord {
    std::string config_text;
    AccuracyMatrix matrix{1};
    double average_acc = 0.0;
    double forget = 0.0;
    bool forget_defined = false;
    double wallclock_s = 0.0;
    std::vector<EpochEvent> epochs;
};

struct RunOutput {
    RunRecord record;
    HyperHeadModel model;
    std::vector<TaskDataset> tasks;
};

std::vector<TaskDataset> build_tasks(const RunConfig& cfg);

/// Builds the data, trains the full sequence, computes metrics. For a
/// single-task run the forgetting metric is undefined; it is reported as 0
/// with forget_defined false.
RunOutput execute_run(const RunConfig& cfg, StepObserver observer = nullptr);

/// Writes results.json, matrix.csv, splits.csv and checkpoint.bin into dir.
void write_run_artifacts(const RunOutput& out, const std::filesystem::path& dir);

/// Convenience: execute_run + write_run_artifacts into the config's resolved
/// output dir. Returns the record and the directory used.
RunRecord run_and_save(const RunConfig& cfg, const std::filesystem::path& dir);

/// Full-precision readback of matrix.csv (one row per line, comma separated).
AccuracyMatrix read_matrix_csv(const std::filesystem::path& path);

struct ResultsSummary {
    double average_acc = 0.0;
    double forget = 0.0;
    bool forget_defined = false;
};

ResultsSummary read_results_json(const std::filesystem::path& path);

struct SweepRow {
    std::string axis_value;
    double average_acc = 0.0;
    double forget = 0.0;
    std::uint64_t seed = 0;
    double wallclock_s = 0.0;
    std::filesystem::path run_dir;
};

/// One run per axis value, seeds derived as base seed + index, executed on
/// up to `jobs` threads (0 means min(cores, values)). Artifacts land in
/// numbered subdirectories of out_dir and a sweep.csv summary is written.
std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis,
                                const std::vector<std::string>& values,
                                const std::filesystem::path& out_dir, int jobs = 0);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

/// Finite-difference battery with a per-op report. Returns the process exit
/// code contract: 0 when all ops pass, 5 on any breach.
int gradcheck_command(std::ostream& out, int trials, bool inject_relu_fault);

}  // namespace protohead
