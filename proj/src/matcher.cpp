#include "him/matcher.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace him {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double assignment_cost(const Tensor& cost, const std::vector<int>& row_to_col) {
  double s = 0.0;
  for (size_t r = 0; r < row_to_col.size(); ++r)
    s += cost.at(static_cast<int>(r), row_to_col[r]);
  return s;
}
}  // namespace

std::vector<int> hungarian_min(const Tensor& cost) {
  if (cost.rank() != 2)
    throw ShapeError("hungarian: cost must be rank-2, got " + cost.shape_str());
  const int n = cost.dim(0), m = cost.dim(1);
  if (n > m) throw ShapeError("hungarian: more rows than columns");
  if (!cost.all_finite()) throw ShapeError("hungarian: non-finite cost entry");

  // potentials method, 1-indexed; p[j] = row currently matched to column j
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(m) + 1, 0);
  std::vector<int> way(static_cast<size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(m) + 1, kInf);
    std::vector<char> used(static_cast<size_t>(m) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] -
                           v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[static_cast<size_t>(j)] > 0)
      row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

Assignment solve_assignment(const Tensor& cost) {
  if (cost.rank() != 2)
    throw ShapeError("assign: cost must be (N,X), got " + cost.shape_str());
  const int n_queries = cost.dim(0), n_targets = cost.dim(1);
  if (n_targets > n_queries)
    throw ShapeError("assign: " + std::to_string(n_targets) +
                     " targets exceed " + std::to_string(n_queries) + " queries");
  if (!cost.all_finite()) throw ShapeError("assign: non-finite cost entry");

  // solver wants rows <= cols: targets as rows
  Tensor t_cost = Tensor::zeros({n_targets, n_queries});
  for (int x = 0; x < n_targets; ++x)
    for (int i = 0; i < n_queries; ++i) t_cost.at(x, i) = cost.at(i, x);

  std::vector<int> query_of_target = hungarian_min(t_cost);
  double best = assignment_cost(t_cost, query_of_target);

  // lexicographic tie-break: for each target in order, pin the smallest query
  // that still allows an optimal completion
  const double tol = 1e-9 * std::max(1.0, std::abs(best));
  std::vector<char> query_taken(static_cast<size_t>(n_queries), 0);
  std::vector<int> fixed(static_cast<size_t>(n_targets), -1);
  for (int x = 0; x < n_targets; ++x) {
    double fixed_cost = 0.0;
    for (int fx = 0; fx < x; ++fx) fixed_cost += t_cost.at(fx, fixed[static_cast<size_t>(fx)]);
    for (int i = 0; i < n_queries; ++i) {
      if (query_taken[static_cast<size_t>(i)]) continue;
      // remaining problem with target x -> query i removed
      const int rem_rows = n_targets - x - 1;
      double total = fixed_cost + t_cost.at(x, i);
      if (rem_rows > 0) {
        std::vector<int> col_map;  // remaining query columns
        for (int q = 0; q < n_queries; ++q)
          if (!query_taken[static_cast<size_t>(q)] && q != i) col_map.push_back(q);
        Tensor sub = Tensor::zeros({rem_rows, static_cast<int>(col_map.size())});
        for (int rx = 0; rx < rem_rows; ++rx)
          for (size_t ci = 0; ci < col_map.size(); ++ci)
            sub.at(rx, static_cast<int>(ci)) = t_cost.at(x + 1 + rx, col_map[ci]);
        std::vector<int> sub_sol = hungarian_min(sub);
        total += assignment_cost(sub, sub_sol);
      }
      if (total <= best + tol) {
        fixed[static_cast<size_t>(x)] = i;
        query_taken[static_cast<size_t>(i)] = 1;
        break;
      }
    }
    if (fixed[static_cast<size_t>(x)] < 0)
      throw ShapeError("assign: internal failure pinning target " + std::to_string(x));
  }

  Assignment out;
  out.query_of_target = fixed;
  out.target_of_query.assign(static_cast<size_t>(n_queries), -1);
  for (int x = 0; x < n_targets; ++x) {
    out.pairs.emplace_back(fixed[static_cast<size_t>(x)], x);
    out.target_of_query[static_cast<size_t>(fixed[static_cast<size_t>(x)])] = x;
    out.total_cost += cost.at(fixed[static_cast<size_t>(x)], x);
  }
  return out;
}

}  // namespace him
