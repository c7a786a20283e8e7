#pragma once

#include <stdexcept>
#include <vector>

namespace protohead {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Lower-triangular accuracy record of a task sequence. Entry (after, eval)
/// is the test accuracy on task `eval` measured right after finishing task
/// `after`; both indices are task ids starting at 1, eval <= after. Each cell
/// is written exactly once and must lie in [0, 1].
class AccuracyMatrix {
  public:
    explicit AccuracyMatrix(int num_tasks);

    int num_tasks() const { return num_tasks_; }
    void set(int after, int eval, double accuracy);
    double at(int after, int eval) const;
    bool is_set(int after, int eval) const;
    bool row_complete(int after) const;

    /// Row `after` as a vector of length `after`.
    std::vector<double> row(int after) const;

    bool operator==(const AccuracyMatrix&) const = default;

  private:
    int index(int after, int eval) const;

    int num_tasks_ = 0;
    std::vector<double> cells_;
    std::vector<bool> written_;
};

/// Mean accuracy over every task after the final one: requires the last row
/// to be complete.
double average_accuracy(const AccuracyMatrix& m);

/// Mean over tasks j < K of (best accuracy ever observed on j) minus (final
/// accuracy on j). Negative values mean backward transfer and are reported
/// as-is. Undefined for a single task.
double forgetting(const AccuracyMatrix& m);

}  // namespace protohead
