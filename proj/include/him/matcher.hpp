#pragma once

#include <utility>
#include <vector>

#include "him/tensor.hpp"

namespace him {

// Query-to-target matching result. pairs are ordered by target index; every
// target is matched (queries >= targets is a precondition).
struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (query i, target x)
  std::vector<int> query_of_target;        // size X
  std::vector<int> target_of_query;        // size N, -1 when unmatched
  double total_cost = 0.0;
};

// Minimum-cost one-to-one assignment of rows to columns (rows <= cols),
// Hungarian algorithm with potentials. Returns col index per row.
std::vector<int> hungarian_min(const Tensor& cost);

// cost is (N queries, X targets) with N >= X; non-finite entries are
// rejected. Among minimum-cost assignments the lexicographically smallest
// query list (by target order) is returned.
Assignment solve_assignment(const Tensor& cost);

}  // namespace him
