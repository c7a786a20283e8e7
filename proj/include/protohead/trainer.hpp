#pragma once

#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "protohead/config.hpp"
#include "protohead/datasets.hpp"
#include "protohead/losses.hpp"
#include "protohead/metrics.hpp"
#include "protohead/model.hpp"
#include "protohead/optimizer.hpp"

namespace protohead {

/// Raised when a loss turns NaN or infinite; carries the global step index.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(long step_index, const std::string& what)
        : std::runtime_error(what), step(step_index) {}
    long step;
};

/// Raised when the task protocol is violated (out-of-order training, missing
/// snapshot, broken storage-growth contract).
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EpochEvent {
    int task = 0;
    int epoch = 0;
    double hard = 0.0;
    double soft_main = 0.0;
    double soft_proto = 0.0;
    double total = 0.0;
};

enum class StepPhase { Main, Proto };

/// Fired around every optimizer sub-step, before (`after` false) and after
/// (`after` true) the update. Lets audits checksum parameter groups.
struct StepEvent {
    StepPhase phase;
    int task = 0;
    long step_index = 0;
    bool after = false;
};

using EpochSink = std::function<void(const EpochEvent&)>;
using StepObserver = std::function<void(const HyperHeadModel&, const StepEvent&)>;

/// Sets requires_grad to false on the given tensors for its lifetime and
/// restores the previous flags on exit.
class FreezeScope {
  public:
    explicit FreezeScope(const std::vector<Tensor>& params);
    ~FreezeScope();
    FreezeScope(const FreezeScope&) = delete;
    FreezeScope& operator=(const FreezeScope&) = delete;

  private:
    std::vector<Tensor> params_;
    std::vector<bool> prev_;
};

/// Test accuracy of the model's head for `task_id` over pre-normalized rows.
double evaluate(const HyperHeadModel& model, const Tensor& inputs,
                const std::vector<int>& labels, int task_id);

/// Drives one task sequence: per task it registers fresh prototypes, then
/// alternates per batch between a MAIN step (hard loss plus response
/// distillation; updates backbone, hypernetwork, and the current task's
/// prototypes) and a PROTO step (prototype distillation; updates only
/// previous tasks' prototypes). The model is snapshotted once at every task
/// boundary, after which the finished task's row of the accuracy matrix is
/// filled.
class SequenceTrainer {
  public:
    SequenceTrainer(const RunConfig& cfg, std::vector<TaskDataset> tasks);

    void set_epoch_sink(EpochSink sink) { epoch_sink_ = std::move(sink); }
    void set_step_observer(StepObserver obs) { step_observer_ = std::move(obs); }

    const HyperHeadModel& model() const { return model_; }
    HyperHeadModel& model() { return model_; }
    const AccuracyMatrix& matrix() const { return matrix_; }
    const ChannelStats& input_stats() const { return input_stats_; }
    long steps_taken() const { return steps_; }
    int num_tasks() const { return static_cast<int>(tasks_.size()); }

    /// Trains the next task in order; anything else is a ProtocolError.
    void train_task(int task_id);

    /// Snapshot plus evaluation row for a finished task.
    void finish_task(int task_id);

    /// Full sequence: train_task + finish_task for every task.
    const AccuracyMatrix& run();

    /// Accuracy of the current model on one task's test split.
    double evaluate_task(int task_id) const;

  private:
    struct PreparedTask {
        Tensor train_inputs;  // [n x input_numel], normalized
        std::vector<int> train_labels;
        Tensor test_inputs;
        std::vector<int> test_labels;
    };

    Tensor gather_rows(const Tensor& rows, const std::vector<int>& order, int begin,
                       int count) const;
    void observe(StepPhase phase, bool after);

    RunConfig cfg_;
    std::vector<TaskDataset> tasks_;
    std::mt19937_64 rng_;
    ChannelStats input_stats_;
    HyperHeadModel model_;
    std::vector<PreparedTask> prepared_;
    std::optional<FrozenModel> frozen_;
    AccuracyMatrix matrix_;
    EpochSink epoch_sink_;
    StepObserver step_observer_;
    int next_task_ = 1;
    int current_task_ = 0;
    long steps_ = 0;
};

}  // namespace protohead
