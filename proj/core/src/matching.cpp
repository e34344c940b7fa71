#include "setpose/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "setpose/error.hpp"
#include "setpose/nn/ops.hpp"

namespace setpose {

namespace {

struct Solution {
  std::vector<std::size_t> col_of_row;
  std::vector<double> u;  // row potentials
  std::vector<double> v;  // column potentials
};

/// Shortest-augmenting-path Hungarian method with row/column potentials,
/// O(n^3) on a square matrix. Potentials satisfy u_i + v_j <= c_ij with
/// equality on every assigned edge.
Solution solve_square(const nn::Matrix& costs) {
  const std::size_t n = costs.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based; index 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0);
  std::vector<std::size_t> way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = costs(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Solution out{std::vector<std::size_t>(n, 0), std::vector<double>(u.begin() + 1, u.end()),
               std::vector<double>(v.begin() + 1, v.end())};
  for (std::size_t j = 1; j <= n; ++j) out.col_of_row[p[j] - 1] = j - 1;
  return out;
}

/// Finds a new tight column for `row` along an alternating path that ends in
/// `target`. The matching is only changed when a path exists.
bool free_column(std::size_t row, std::size_t target, const std::vector<std::vector<std::size_t>>& tight,
                 std::vector<std::size_t>& col_of_row, std::vector<std::size_t>& row_of_col,
                 const std::vector<char>& blocked, std::vector<char>& visited) {
  for (std::size_t c : tight[row]) {
    if (blocked[c] || visited[c]) continue;
    visited[c] = 1;
    if (c == target ||
        free_column(row_of_col[c], target, tight, col_of_row, row_of_col, blocked, visited)) {
      col_of_row[row] = c;
      row_of_col[c] = row;
      return true;
    }
  }
  return false;
}

}  // namespace

Assignment hungarian(const CostMatrix& costs) {
  const std::size_t n = costs.rows();
  const std::size_t m = costs.cols();
  if (n > m) {
    throw ShapeError("hungarian: " + std::to_string(n) + " rows exceed " + std::to_string(m) +
                     " columns");
  }
  double magnitude = 0.0;
  for (double c : costs.values()) {
    if (!std::isfinite(c)) throw NonFinite("hungarian: cost matrix has a non-finite entry");
    magnitude = std::max(magnitude, std::fabs(c));
  }
  Assignment result;
  if (n == 0) return result;

  // Zero-cost dummy rows make the problem square without changing which
  // column sets are optimal for the real rows.
  nn::Matrix square(m, m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) square(i, j) = costs(i, j);
  Solution sol = solve_square(square);

  // Optimal assignments are exactly the perfect matchings on tight edges.
  const double tol = 1e-12 * (1.0 + magnitude * static_cast<double>(m));
  std::vector<std::vector<std::size_t>> tight(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (square(i, j) - sol.u[i] - sol.v[j] <= tol) tight[i].push_back(j);
    }
  }
  std::vector<std::size_t>& col_of_row = sol.col_of_row;
  std::vector<std::size_t> row_of_col(m);
  for (std::size_t i = 0; i < m; ++i) row_of_col[col_of_row[i]] = i;

  // Lexicographic tie-break: fix rows in order, each to the smallest tight
  // column that still leaves a perfect matching for the rows after it.
  std::vector<char> blocked(m, 0);
  std::vector<char> visited(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : tight[i]) {
      if (blocked[j]) continue;
      if (j == col_of_row[i]) break;
      // Give j to row i if j's current row can move to i's old column.
      std::fill(visited.begin(), visited.end(), 0);
      blocked[j] = 1;
      if (free_column(row_of_col[j], col_of_row[i], tight, col_of_row, row_of_col, blocked,
                      visited)) {
        col_of_row[i] = j;
        row_of_col[j] = i;
        break;
      }
      blocked[j] = 0;
    }
    blocked[col_of_row[i]] = 1;
  }

  result.row_to_col.assign(col_of_row.begin(), col_of_row.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t i = 0; i < n; ++i) result.total_cost += costs(i, result.row_to_col[i]);
  return result;
}

double match_cost(HandSide gt_side, std::span<const double, kJointValues> gt_joints_norm,
                  const QueryPrediction& pred, double lambda_cls, double lambda_l1) {
  const nn::Matrix probs =
      nn::softmax_rows(nn::Matrix(1, kNumClasses,
                                  std::vector<double>(pred.class_logits.begin(),
                                                      pred.class_logits.end())));
  double l1 = 0.0;
  for (std::size_t k = 0; k < kJointValues; ++k) {
    l1 += std::fabs(pred.joints_norm[k] - gt_joints_norm[k]);
  }
  l1 /= static_cast<double>(kJointValues);
  return lambda_cls * -probs(0, index_of(gt_side)) + lambda_l1 * l1;
}

CostMatrix build_cost_matrix(std::span<const HandTarget> targets, const DetectionSet& detections,
                             const LossWeights& weights) {
  CostMatrix costs(targets.size(), detections.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t q = 0; q < detections.size(); ++q) {
      costs(i, q) = match_cost(targets[i].side, targets[i].joints_norm, detections[q],
                               weights.lambda_cls, weights.lambda_l1);
    }
  }
  return costs;
}

Assignment match(std::span<const HandTarget> targets, const DetectionSet& detections,
                 const LossWeights& weights) {
  return hungarian(build_cost_matrix(targets, detections, weights));
}

SetLossGraph set_loss_graph(nn::Var class_logits, nn::Var joints,
                            std::span<const HandTarget> targets, const Assignment& assignment,
                            const LossWeights& weights) {
  const std::size_t n_queries = class_logits.rows();
  if (class_logits.cols() != kNumClasses || joints.cols() != kJointValues ||
      joints.rows() != n_queries) {
    throw InconsistentAssignment("set_loss: prediction heads have unexpected shapes");
  }
  if (assignment.row_to_col.size() != targets.size()) {
    throw InconsistentAssignment("set_loss: assignment covers " +
                                 std::to_string(assignment.row_to_col.size()) + " targets, got " +
                                 std::to_string(targets.size()));
  }
  std::vector<std::size_t> cls_target(n_queries, kNoHandClass);
  std::vector<double> cls_weight(n_queries, weights.w_noobj);
  std::vector<char> matched(n_queries, 0);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::size_t q = assignment.row_to_col[i];
    if (q >= n_queries || matched[q]) {
      throw InconsistentAssignment("set_loss: assignment is not an injective map into queries");
    }
    matched[q] = 1;
    cls_target[q] = index_of(targets[i].side);
    cls_weight[q] = 1.0;
  }

  nn::Tape& tape = class_logits.tape();
  nn::Var cls = nn::weighted_cross_entropy(class_logits, cls_target, cls_weight);
  nn::Var l1;
  if (targets.empty()) {
    l1 = tape.constant(nn::Matrix(1, 1, 0.0));
  } else {
    nn::Matrix gt(targets.size(), kJointValues);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      std::copy(targets[i].joints_norm.begin(), targets[i].joints_norm.end(), gt.row(i).begin());
    }
    nn::Var picked = nn::gather_rows(joints, assignment.row_to_col);
    l1 = nn::mean(nn::abs(nn::sub(picked, tape.constant(std::move(gt)))));
  }
  nn::Var total = nn::add(nn::scale(cls, weights.lambda_cls), nn::scale(l1, weights.lambda_l1));

  SetLossGraph out;
  out.total = total;
  out.breakdown.cls_loss = cls.value()(0, 0);
  out.breakdown.l1_loss = l1.value()(0, 0);
  out.breakdown.total = total.value()(0, 0);
  out.breakdown.weights = weights;
  return out;
}

LossBreakdown set_loss(const DetectionSet& detections, std::span<const HandTarget> targets,
                       const Assignment& assignment, const LossWeights& weights) {
  nn::Matrix logits(detections.size(), kNumClasses);
  nn::Matrix joints(detections.size(), kJointValues);
  for (std::size_t q = 0; q < detections.size(); ++q) {
    std::copy(detections[q].class_logits.begin(), detections[q].class_logits.end(),
              logits.row(q).begin());
    std::copy(detections[q].joints_norm.begin(), detections[q].joints_norm.end(),
              joints.row(q).begin());
  }
  nn::Tape tape;
  return set_loss_graph(tape.constant(std::move(logits)), tape.constant(std::move(joints)),
                        targets, assignment, weights)
      .breakdown;
}

}  // namespace setpose
