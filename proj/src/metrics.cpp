#include "protohead/metrics.hpp"

#include <algorithm>
#include <string>

namespace protohead {

AccuracyMatrix::AccuracyMatrix(int num_tasks) : num_tasks_(num_tasks) {
    if (num_tasks < 1) throw MetricError("accuracy matrix: need at least one task");
    const int cells = num_tasks * (num_tasks + 1) / 2;
    cells_.assign(cells, 0.0);
    written_.assign(cells, false);
}

int AccuracyMatrix::index(int after, int eval) const {
    if (after < 1 || after > num_tasks_ || eval < 1 || eval > after) {
        throw MetricError("accuracy matrix: cell (" + std::to_string(after) + ", " +
                          std::to_string(eval) + ") outside lower triangle of K=" +
                          std::to_string(num_tasks_));
    }
    return (after - 1) * after / 2 + (eval - 1);
}

void AccuracyMatrix::set(int after, int eval, double accuracy) {
    const int i = index(after, eval);
    if (written_[i]) {
        throw MetricError("accuracy matrix: cell (" + std::to_string(after) + ", " +
                          std::to_string(eval) + ") written twice");
    }
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
        throw MetricError("accuracy matrix: accuracy " + std::to_string(accuracy) +
                          " outside [0, 1]");
    }
    cells_[i] = accuracy;
    written_[i] = true;
}

double AccuracyMatrix::at(int after, int eval) const {
    const int i = index(after, eval);
    if (!written_[i]) {
        throw MetricError("accuracy matrix: cell (" + std::to_string(after) + ", " +
                          std::to_string(eval) + ") never written");
    }
    return cells_[i];
}

bool AccuracyMatrix::is_set(int after, int eval) const {
    return written_[index(after, eval)];
}

bool AccuracyMatrix::row_complete(int after) const {
    for (int j = 1; j <= after; ++j) {
        if (!is_set(after, j)) return false;
    }
    return true;
}

std::vector<double> AccuracyMatrix::row(int after) const {
    std::vector<double> out(after);
    for (int j = 1; j <= after; ++j) out[j - 1] = at(after, j);
    return out;
}

double average_accuracy(const AccuracyMatrix& m) {
    const int k = m.num_tasks();
    double acc = 0.0;
    for (int j = 1; j <= k; ++j) acc += m.at(k, j);
    return acc / k;
}

double forgetting(const AccuracyMatrix& m) {
    const int k = m.num_tasks();
    if (k < 2) throw MetricError("forgetting: undefined for a single task");
    double acc = 0.0;
    for (int j = 1; j < k; ++j) {
        double best = m.at(j, j);
        for (int l = j; l < k; ++l) best = std::max(best, m.at(l, j));
        acc += best - m.at(k, j);
    }
    return acc / (k - 1);
}

}  // namespace protohead
