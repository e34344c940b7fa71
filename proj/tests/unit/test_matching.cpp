#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "setpose/error.hpp"
#include "setpose/matching.hpp"
#include "test_util.hpp"

namespace setpose {
namespace {

using nn::Matrix;

/// Exhaustive search over injective maps; returns the lexicographically
/// first optimum.
Assignment brute_force(const Matrix& c) {
  const std::size_t rows = c.rows(), cols = c.cols();
  Assignment best;
  best.total_cost = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> cur(rows);
  std::vector<char> used(cols, 0);
  auto rec = [&](auto&& self, std::size_t r) -> void {
    if (r == rows) {
      double total = 0.0;
      for (std::size_t i = 0; i < rows; ++i) total += c(i, cur[i]);
      if (total < best.total_cost) {
        best.total_cost = total;
        best.row_to_col = cur;
      }
      return;
    }
    for (std::size_t j = 0; j < cols; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      cur[r] = j;
      self(self, r + 1);
      used[j] = 0;
    }
  };
  rec(rec, 0);
  return best;
}

TEST(Hungarian, SpecExamples) {
  const Assignment a = hungarian(Matrix(2, 2, {0, 1, 1, 0}));
  EXPECT_EQ(a.row_to_col, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(a.total_cost, 0.0);

  const Assignment b = hungarian(Matrix(2, 2, {1, 2, 2, 1}));
  EXPECT_EQ(b.row_to_col, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(b.total_cost, 2.0);

  const Assignment c = hungarian(Matrix(3, 3, {4, 1, 3, 2, 0, 5, 3, 2, 2}));
  EXPECT_EQ(c.row_to_col, (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_EQ(c.total_cost, 5.0);
}

TEST(Hungarian, RectangularAndEmpty) {
  const Assignment a = hungarian(Matrix(1, 4, {3, 2, 0.5, 7}));
  EXPECT_EQ(a.row_to_col, (std::vector<std::size_t>{2}));
  EXPECT_EQ(hungarian(Matrix(0, 3)).row_to_col.size(), 0u);
  EXPECT_EQ(hungarian(Matrix(0, 3)).total_cost, 0.0);
}

TEST(Hungarian, MatchesBruteForceOnRandomMatrices) {
  Rng rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t cols = 1 + rng.below(8);
    const std::size_t rows = 1 + rng.below(std::min<std::size_t>(5, cols));
    const Matrix c = testing::random_matrix(rng, rows, cols, -10.0, 10.0);
    const Assignment fast = hungarian(c);
    const Assignment slow = brute_force(c);
    // Both sum in row order, so the optimum is reproduced bit for bit.
    ASSERT_EQ(fast.total_cost, slow.total_cost) << "trial " << trial;
  }
}

TEST(Hungarian, TiesGoToLexicographicallySmallest) {
  EXPECT_EQ(hungarian(Matrix(2, 3, 1.0)).row_to_col, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(hungarian(Matrix(2, 2, {1, 1, 1, 1})).row_to_col, (std::vector<std::size_t>{0, 1}));
  // Zero-cost optima: {1, 0}, {1, 2} and {2, 0}.
  const Matrix m(2, 3, {5, 0, 0, 0, 5, 0});
  EXPECT_EQ(hungarian(m).row_to_col, (std::vector<std::size_t>{1, 0}));

  // Small integer matrices tie often; compare against the lexicographic scan.
  Rng rng(77);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t cols = 1 + rng.below(7);
    const std::size_t rows = 1 + rng.below(cols);
    Matrix c(rows, cols);
    for (double& v : c.values()) v = static_cast<double>(rng.below(3));
    ASSERT_EQ(hungarian(c).row_to_col, brute_force(c).row_to_col) << "trial " << trial;
  }
}

TEST(Hungarian, RowConstantLeavesAssignmentUnchanged) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t cols = 2 + rng.below(6);
    const std::size_t rows = 1 + rng.below(std::min<std::size_t>(5, cols));
    Matrix c = testing::random_matrix(rng, rows, cols, -10.0, 10.0);
    const Assignment before = hungarian(c);
    const std::size_t r = rng.below(rows);
    const double shift = rng.uniform(-20.0, 20.0);
    for (double& v : c.row(r)) v += shift;
    EXPECT_EQ(hungarian(c).row_to_col, before.row_to_col);
  }
}

TEST(Hungarian, Errors) {
  EXPECT_THROW(hungarian(Matrix(3, 2)), ShapeError);
  Matrix nan(2, 2, 0.0);
  nan(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(hungarian(nan), NonFinite);
  Matrix inf(1, 2, 0.0);
  inf(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(hungarian(inf), NonFinite);
}

/// Logits whose softmax puts probability p on `cls` and splits the rest.
std::array<double, kNumClasses> logits_with_prob(std::size_t cls, double p) {
  std::array<double, kNumClasses> z{};
  const double rest = (1.0 - p) / 2.0;
  for (std::size_t k = 0; k < kNumClasses; ++k) z[k] = std::log(k == cls ? p : rest);
  return z;
}

TEST(MatchCost, SpecExamples) {
  std::array<double, kJointValues> gt{};
  gt.fill(0.5);
  QueryPrediction pred;
  pred.joints_norm = gt;

  // p = 1 is the limit of a very confident logit.
  pred.class_logits = {60.0, 0.0, 0.0};
  EXPECT_NEAR(match_cost(HandSide::Left, gt, pred, 1.0, 5.0), -1.0, 1e-15);

  pred.class_logits = {0.0, 0.0, 0.0};
  EXPECT_NEAR(match_cost(HandSide::Right, gt, pred, 1.0, 5.0), -1.0 / 3.0, 1e-15);

  pred.class_logits = logits_with_prob(1, 0.5);
  for (double& v : pred.joints_norm) v = 0.6;  // |delta| = 0.1 everywhere
  EXPECT_NEAR(match_cost(HandSide::Right, gt, pred, 1.0, 5.0), 0.0, 1e-12);
}

/// Straight-line evaluation of the set loss.
LossBreakdown reference_loss(const DetectionSet& det, const std::vector<HandTarget>& targets,
                             const std::vector<std::size_t>& row_to_col, const LossWeights& w) {
  const std::size_t n = det.size();
  double cls = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    std::size_t target = kNoHandClass;
    double weight = w.w_noobj;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (row_to_col[i] == q) {
        target = index_of(targets[i].side);
        weight = 1.0;
      }
    }
    const auto& z = det[q].class_logits;
    const double log_z = std::log(std::exp(z[0]) + std::exp(z[1]) + std::exp(z[2]));
    cls += weight * (log_z - z[target]);
  }
  cls /= static_cast<double>(n);
  double l1 = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t k = 0; k < kJointValues; ++k) {
      l1 += std::fabs(det[row_to_col[i]].joints_norm[k] - targets[i].joints_norm[k]);
    }
  }
  if (!targets.empty()) l1 /= static_cast<double>(targets.size() * kJointValues);
  LossBreakdown out;
  out.cls_loss = cls;
  out.l1_loss = l1;
  out.total = w.lambda_cls * cls + w.lambda_l1 * l1;
  return out;
}

DetectionSet random_detections(Rng& rng, std::size_t n) {
  DetectionSet det(n);
  for (auto& q : det) {
    for (double& z : q.class_logits) z = rng.uniform(-3.0, 3.0);
    for (double& v : q.joints_norm) v = rng.uniform(0.0, 1.0);
  }
  return det;
}

std::vector<HandTarget> random_targets(Rng& rng) {
  std::vector<HandTarget> t(2);
  t[0].side = HandSide::Left;
  t[1].side = HandSide::Right;
  for (auto& h : t) {
    for (double& v : h.joints_norm) v = rng.uniform(0.0, 1.0);
  }
  return t;
}

TEST(SetLoss, ZeroResidualAndConfidentCorrect) {
  Rng rng(3);
  DetectionSet det = random_detections(rng, 1);
  std::vector<HandTarget> t(1);
  t[0].side = HandSide::Right;
  t[0].joints_norm = det[0].joints_norm;
  det[0].class_logits = {-800.0, 0.0, -800.0};
  const LossBreakdown loss = set_loss(det, t, Assignment{{0}, 0.0}, LossWeights{});
  EXPECT_EQ(loss.l1_loss, 0.0);
  EXPECT_EQ(loss.cls_loss, 0.0);
}

TEST(SetLoss, MatchesStraightLineRecomputation) {
  Rng rng(4);
  const LossWeights w;
  for (int trial = 0; trial < 50; ++trial) {
    const DetectionSet det = random_detections(rng, 4);
    const std::vector<HandTarget> t = random_targets(rng);
    const Assignment a = match(t, det, w);
    const LossBreakdown got = set_loss(det, t, a, w);
    const LossBreakdown want = reference_loss(det, t, a.row_to_col, w);
    EXPECT_LT(testing::rel_diff(got.cls_loss, want.cls_loss), 1e-12);
    EXPECT_LT(testing::rel_diff(got.l1_loss, want.l1_loss), 1e-12);
    EXPECT_LT(testing::rel_diff(got.total, want.total), 1e-12);
  }
}

TEST(SetLoss, MatchingMinimisesTheMatchCost) {
  Rng rng(8);
  const LossWeights w;
  for (int trial = 0; trial < 50; ++trial) {
    const DetectionSet det = random_detections(rng, 4);
    const std::vector<HandTarget> t = random_targets(rng);
    const Matrix c = build_cost_matrix(t, det, w);
    ASSERT_EQ(c.rows(), 2u);
    ASSERT_EQ(c.cols(), 4u);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t q = 0; q < 4; ++q) {
        EXPECT_EQ(c(i, q), match_cost(t[i].side, t[i].joints_norm, det[q], 1.0, 5.0));
      }
    }
    EXPECT_EQ(match(t, det, w).total_cost, brute_force(c).total_cost);
  }
}

TEST(SetLoss, PermutingQueriesIsInvariant) {
  Rng rng(6);
  const LossWeights w;
  for (int trial = 0; trial < 30; ++trial) {
    const DetectionSet det = random_detections(rng, 4);
    const std::vector<HandTarget> t = random_targets(rng);
    const Assignment a = match(t, det, w);

    std::vector<std::size_t> perm(4);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 3; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    // Query q moves to position perm[q].
    DetectionSet shuffled(4);
    for (std::size_t q = 0; q < 4; ++q) shuffled[perm[q]] = det[q];
    Assignment relabeled = a;
    for (auto& q : relabeled.row_to_col) q = perm[q];

    const double before = set_loss(det, t, a, w).total;
    const double after = set_loss(shuffled, t, relabeled, w).total;
    EXPECT_LT(testing::rel_diff(before, after), 1e-12);
    EXPECT_EQ(match(t, shuffled, w).row_to_col, relabeled.row_to_col);
  }
}

TEST(SetLoss, DecreasesWhenAMatchedJointMovesTowardsTheTarget) {
  Rng rng(10);
  const LossWeights w;
  for (int trial = 0; trial < 100; ++trial) {
    DetectionSet det = random_detections(rng, 4);
    const std::vector<HandTarget> t = random_targets(rng);
    const Assignment a = match(t, det, w);
    const double before = set_loss(det, t, a, w).total;
    const std::size_t i = rng.below(2);
    const std::size_t k = rng.below(kJointValues);
    double& v = det[a.row_to_col[i]].joints_norm[k];
    v += 0.5 * (t[i].joints_norm[k] - v);
    EXPECT_LT(set_loss(det, t, a, w).total, before);
  }
}

TEST(SetLoss, RejectsInconsistentAssignments) {
  Rng rng(12);
  const DetectionSet det = random_detections(rng, 3);
  const std::vector<HandTarget> t = random_targets(rng);
  EXPECT_THROW(set_loss(det, t, Assignment{{0}, 0.0}, LossWeights{}), InconsistentAssignment);
  EXPECT_THROW(set_loss(det, t, Assignment{{1, 1}, 0.0}, LossWeights{}), InconsistentAssignment);
  EXPECT_THROW(set_loss(det, t, Assignment{{0, 3}, 0.0}, LossWeights{}), InconsistentAssignment);
}

TEST(SetLoss, NoTargetsGivesOnlyNoHandTerms) {
  Rng rng(13);
  const DetectionSet det = random_detections(rng, 3);
  const LossBreakdown loss = set_loss(det, {}, Assignment{}, LossWeights{});
  EXPECT_EQ(loss.l1_loss, 0.0);
  EXPECT_LT(testing::rel_diff(loss.cls_loss, reference_loss(det, {}, {}, LossWeights{}).cls_loss),
            1e-12);
}

}  // namespace
}  // namespace setpose
