#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "protohead/metrics.hpp"
#include "protohead/tensor.hpp"

using namespace protohead;

namespace {

AccuracyMatrix random_matrix(int k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    AccuracyMatrix m(k);
    for (int after = 1; after <= k; ++after) {
        for (int eval = 1; eval <= after; ++eval) m.set(after, eval, u(rng));
    }
    return m;
}

// Direct transliteration of the definitions, no shared code with the library:
// AA = (1/K) sum_j R[K][j]; FM = (1/(K-1)) sum_{j<K} (max_{l in [j, K-1]}
// R[l][j] - R[K][j]).
double brute_average(const AccuracyMatrix& m) {
    const int k = m.num_tasks();
    double total = 0.0;
    for (int j = 1; j <= k; ++j) total += m.at(k, j);
    return total / k;
}

double brute_forgetting(const AccuracyMatrix& m) {
    const int k = m.num_tasks();
    double total = 0.0;
    for (int j = 1; j < k; ++j) {
        double best = -1.0;
        for (int l = j; l <= k - 1; ++l) best = std::max(best, m.at(l, j));
        total += best - m.at(k, j);
    }
    return total / (k - 1);
}

}  // namespace

TEST_CASE("matrix indexing and write-once discipline") {
    AccuracyMatrix m(3);
    CHECK(m.num_tasks() == 3);
    CHECK_FALSE(m.is_set(1, 1));
    m.set(1, 1, 0.5);
    CHECK(m.is_set(1, 1));
    CHECK(m.at(1, 1) == 0.5);
    CHECK(m.row_complete(1));
    CHECK_FALSE(m.row_complete(2));

    CHECK_THROWS_AS(m.set(1, 1, 0.6), MetricError);
    CHECK_THROWS_AS(m.set(1, 2, 0.5), MetricError);
    CHECK_THROWS_AS(m.set(4, 1, 0.5), MetricError);
    CHECK_THROWS_AS(m.set(0, 1, 0.5), MetricError);
    CHECK_THROWS_AS(m.set(2, 1, -0.1), MetricError);
    CHECK_THROWS_AS(m.set(2, 1, 1.1), MetricError);
    CHECK_THROWS_AS(m.at(2, 1), MetricError);
    CHECK_THROWS_AS(AccuracyMatrix(0), MetricError);

    m.set(2, 1, 0.25);
    m.set(2, 2, 0.75);
    CHECK(m.row(2) == std::vector<double>{0.25, 0.75});
}

TEST_CASE("average accuracy is the mean of the final row") {
    AccuracyMatrix m(2);
    m.set(1, 1, 0.9);
    CHECK_THROWS_AS(average_accuracy(m), MetricError);
    m.set(2, 1, 0.5);
    m.set(2, 2, 0.8);
    CHECK(average_accuracy(m) == doctest::Approx(0.65).epsilon(1e-15));
}

TEST_CASE("forgetting against a worked example") {
    AccuracyMatrix m(3);
    m.set(1, 1, 0.9);
    m.set(2, 1, 0.7);
    m.set(2, 2, 0.8);
    m.set(3, 1, 0.5);
    m.set(3, 2, 0.85);
    m.set(3, 3, 0.95);
    // task 1: best over rows 1..2 is 0.9, final 0.5 -> 0.4
    // task 2: best over row 2 is 0.8, final 0.85 -> -0.05 (kept, signed)
    CHECK(forgetting(m) == doctest::Approx((0.4 - 0.05) / 2.0).epsilon(1e-15));
}

TEST_CASE("two-task forgetting hand oracle") {
    AccuracyMatrix m(2);
    m.set(1, 1, 0.9);
    m.set(2, 1, 0.5);
    m.set(2, 2, 1.0);
    CHECK(forgetting(m) == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("forgetting is undefined for a single task") {
    AccuracyMatrix m(1);
    m.set(1, 1, 1.0);
    CHECK(average_accuracy(m) == 1.0);
    CHECK_THROWS_AS(forgetting(m), MetricError);
}

TEST_CASE("library metrics match brute force on 100 random matrices") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> size(2, 9);
    for (int t = 0; t < 100; ++t) {
        const AccuracyMatrix m = random_matrix(size(rng), rng);
        CHECK(std::abs(average_accuracy(m) - brute_average(m)) <= 1e-12);
        CHECK(std::abs(forgetting(m) - brute_forgetting(m)) <= 1e-12);
    }
}

TEST_CASE("a perfectly stable sequence has zero forgetting") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (int t = 0; t < 50; ++t) {
        AccuracyMatrix m(4);
        std::vector<double> final_acc(5);
        for (int j = 1; j <= 4; ++j) final_acc[j] = u(rng);
        for (int after = 1; after <= 4; ++after) {
            for (int eval = 1; eval <= after; ++eval) m.set(after, eval, final_acc[eval]);
        }
        CHECK(std::abs(forgetting(m)) < 1e-15);
    }
}
