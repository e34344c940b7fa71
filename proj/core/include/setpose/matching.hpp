#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "setpose/geometry.hpp"
#include "setpose/model.hpp"
#include "setpose/nn/matrix.hpp"
#include "setpose/nn/tape.hpp"

namespace setpose {

/// rows = ground-truth hands, cols = queries.
using CostMatrix = nn::Matrix;

struct Assignment {
  std::vector<std::size_t> row_to_col;  // injective
  double total_cost = 0.0;              // sum of costs at (row, row_to_col[row]), in row order
};

/// Minimum-cost injective row -> column assignment for rows <= cols.
/// Among equal-cost optima the lexicographically smallest row_to_col wins.
/// Throws ShapeError when rows > cols, NonFinite on NaN/inf entries.
Assignment hungarian(const CostMatrix& costs);

struct LossWeights {
  double lambda_cls = 1.0;
  double lambda_l1 = 5.0;
  double w_noobj = 0.1;  // per-term weight of the no-hand target
};

struct HandTarget {
  HandSide side = HandSide::Left;
  std::array<double, kJointValues> joints_norm{};
};

/// lambda_cls * (-p(gt_side)) + lambda_l1 * mean |pred - gt| over the 63 values.
double match_cost(HandSide gt_side, std::span<const double, kJointValues> gt_joints_norm,
                  const QueryPrediction& pred, double lambda_cls, double lambda_l1);

CostMatrix build_cost_matrix(std::span<const HandTarget> targets, const DetectionSet& detections,
                             const LossWeights& weights);

/// hungarian(build_cost_matrix(...)).
Assignment match(std::span<const HandTarget> targets, const DetectionSet& detections,
                 const LossWeights& weights);

struct LossBreakdown {
  double cls_loss = 0.0;
  double l1_loss = 0.0;
  double total = 0.0;
  LossWeights weights;
};

struct SetLossGraph {
  nn::Var total;
  LossBreakdown breakdown;
};

/// Set-prediction loss:
///   cls_loss = (1/N) sum_q w_q CE(logits_q, target_q), target = matched side
///              (w = 1) or no-hand (w = w_noobj) for unmatched queries
///   l1_loss  = mean over matched queries of (1/63) sum |pred - gt|
///   total    = lambda_cls cls_loss + lambda_l1 l1_loss
/// Throws InconsistentAssignment when the assignment does not fit.
SetLossGraph set_loss_graph(nn::Var class_logits, nn::Var joints,
                            std::span<const HandTarget> targets, const Assignment& assignment,
                            const LossWeights& weights);

LossBreakdown set_loss(const DetectionSet& detections, std::span<const HandTarget> targets,
                       const Assignment& assignment, const LossWeights& weights);

}  // namespace setpose
