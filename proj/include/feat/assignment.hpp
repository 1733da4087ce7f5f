#pragma once

#include <vector>

#include "feat/core.hpp"

namespace feat {

/// Exact minimum-cost perfect matching on a square cost matrix (Hungarian
/// method with row/column potentials, O(n^3)). Returns `col` with row i
/// assigned to column col[i].
std::vector<int> solve_assignment(const Matrix& cost);

double assignment_cost(const Matrix& cost, const std::vector<int>& assignment);

/// Pairwise squared Euclidean distances between the columns of a and b.
Matrix squared_distances(const Matrix& a, const Matrix& b);

}  // namespace feat
