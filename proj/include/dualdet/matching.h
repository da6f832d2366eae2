#ifndef DUALDET_MATCHING_H_
#define DUALDET_MATCHING_H_

#include <cstddef>
#include <utility>
#include <vector>

#include "dualdet/detection.h"

namespace dualdet {

// Dense row-major cost matrix; rows are predictions, columns targets.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  CostMatrix(size_t rows, size_t cols, std::vector<double> data);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  const std::vector<double>& data() const { return data_; }

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

struct MatchPair {
  int pred = 0;
  int target = 0;

  bool operator==(const MatchPair&) const = default;
  auto operator<=>(const MatchPair&) const = default;
};

// Result of a bipartite assignment. Pairs are sorted by prediction index.
struct Assignment {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_predictions;
  double total_cost = 0.0;
};

struct MatchWeights {
  double alpha1 = 2.0;  // classification cost
  double alpha2 = 5.0;  // L1 box cost
};

// entry(i, j) = alpha1 * (1 - p_i) + alpha2 * |b_i - g_j|_1
CostMatrix BuildCostMatrix(const Predictions& preds, const Targets& targets,
                           const MatchWeights& w = {});

// Minimum-cost injective assignment of min(rows, cols) rows to columns.
// Uses shortest augmenting paths with dual potentials, O(n^2 m) with
// n = min(rows, cols). Among equal-cost options the lower index wins.
// total_cost is the sum of matched entries in prediction order.
Assignment Hungarian(const CostMatrix& cost);

Assignment OneToOneMatch(const Predictions& preds, const Targets& targets,
                         const MatchWeights& w = {});

// Each target repeated k times, replicas of target t at [t*k, (t+1)*k).
Targets ReplicateTargets(const Targets& targets, int k);

// Hungarian over the k-replicated targets. Pair target indices refer to the
// original (pre-replication) list, so each target gets at most k
// predictions.
Assignment OneToManyMatch(const Predictions& preds, const Targets& targets,
                          int k, const MatchWeights& w = {});

}  // namespace dualdet

#endif  // DUALDET_MATCHING_H_
