#pragma once

// Minimum-cost perfect matching on a dense square (row-major) cost matrix
// (shortest augmenting path with potentials, O(n^3)).

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "memdiff/errors.hpp"
#include "memdiff/sample_set.hpp"

namespace memdiff {

struct Assignment {
    std::vector<std::size_t> column_of_row;
    double cost = 0.0;
};

inline Assignment solve_assignment(const Points& cost) {
    detail::require(cost.rows() == cost.cols(), "assignment needs a square cost matrix");
    const auto n = static_cast<std::size_t>(cost.rows());
    Assignment result;
    if (n == 0) return result;

    constexpr double kInf = std::numeric_limits<double>::infinity();
    // 1-based potentials; column 0 is the virtual source.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> row_of_col(n + 1, 0), way(n + 1, 0);
    std::vector<double> min_slack(n + 1);
    std::vector<char> used(n + 1);

    for (std::size_t i = 1; i <= n; ++i) {
        row_of_col[0] = i;
        std::size_t j0 = 0;
        std::fill(min_slack.begin(), min_slack.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = row_of_col[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            const double* row = cost.data() + (i0 - 1) * n;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = row[j - 1] - u[i0] - v[j];
                if (cur < min_slack[j]) {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if (min_slack[j] < delta) {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of_col[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    result.column_of_row.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) result.column_of_row[row_of_col[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) {
        result.cost += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(result.column_of_row[i]));
    }
    return result;
}

}  // namespace memdiff
