#include "dualdet/matching.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dualdet/error.h"

namespace dualdet {
namespace {

// Shortest augmenting path solver for n <= m. `at(i, j)` is the cost of
// assigning row i to column j. Returns the column assigned to each row.
template <typename CostFn>
std::vector<int> SolveRowsToCols(size_t n, size_t m, CostFn at) {
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based with a virtual column 0, as in the classic formulation.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);

  for (size_t i = 1; i <= n; ++i) {
    p[0] = i;
    size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const size_t i0 = p[j0];
      double delta = inf;
      size_t j1 = 0;
      for (size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (size_t j = 0; j <= m; ++j) {
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
      const size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(n, -1);
  for (size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  }
  return row_to_col;
}

void ValidateScores(const Predictions& preds) {
  for (size_t i = 0; i < preds.size(); ++i) {
    const double s = preds[i].score;
    if (!(s >= 0.0 && s <= 1.0)) {
      std::ostringstream msg;
      msg << "prediction " << i << " has score " << s << " outside [0,1]";
      throw Error(ErrorCode::kValidation, msg.str());
    }
  }
}

}  // namespace

CostMatrix::CostMatrix(size_t rows, size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::kShapeMismatch,
                "cost matrix data does not match its dimensions");
  }
}

CostMatrix BuildCostMatrix(const Predictions& preds, const Targets& targets,
                           const MatchWeights& w) {
  if (preds.empty() || targets.empty()) {
    throw Error(ErrorCode::kEmptyInput,
                "cost matrix needs at least one prediction and one target");
  }
  ValidateScores(preds);
  CostMatrix cost(preds.size(), targets.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    const double cls = w.alpha1 * (1.0 - preds[i].score);
    for (size_t j = 0; j < targets.size(); ++j) {
      cost(i, j) = cls + w.alpha2 * L1BoxDistance(preds[i].box, targets[j].box);
    }
  }
  return cost;
}

Assignment Hungarian(const CostMatrix& cost) {
  for (double c : cost.data()) {
    if (!std::isfinite(c) || c < 0.0) {
      std::ostringstream msg;
      msg << "cost entry " << c << " is not a finite non-negative value";
      throw Error(ErrorCode::kInvalidCost, msg.str());
    }
  }

  const size_t rows = cost.rows();
  const size_t cols = cost.cols();
  std::vector<int> pred_to_target(rows, -1);
  if (rows > 0 && cols > 0) {
    if (rows <= cols) {
      pred_to_target = SolveRowsToCols(
          rows, cols, [&](size_t r, size_t c) { return cost(r, c); });
    } else {
      // More predictions than targets: solve targets -> predictions so the
      // surplus predictions drop out as unmatched.
      const std::vector<int> target_to_pred = SolveRowsToCols(
          cols, rows, [&](size_t r, size_t c) { return cost(c, r); });
      for (size_t t = 0; t < cols; ++t) {
        pred_to_target[target_to_pred[t]] = static_cast<int>(t);
      }
    }
  }

  Assignment out;
  for (size_t i = 0; i < rows; ++i) {
    if (pred_to_target[i] >= 0) {
      out.pairs.push_back({static_cast<int>(i), pred_to_target[i]});
      out.total_cost += cost(i, pred_to_target[i]);
    } else {
      out.unmatched_predictions.push_back(static_cast<int>(i));
    }
  }
  return out;
}

Assignment OneToOneMatch(const Predictions& preds, const Targets& targets,
                         const MatchWeights& w) {
  return Hungarian(BuildCostMatrix(preds, targets, w));
}

Targets ReplicateTargets(const Targets& targets, int k) {
  if (k < 1) {
    throw Error(ErrorCode::kInvalidParameter,
                "replication factor must be >= 1, got " + std::to_string(k));
  }
  Targets out;
  out.reserve(targets.size() * static_cast<size_t>(k));
  for (size_t t = 0; t < targets.size(); ++t) {
    for (int r = 0; r < k; ++r) {
      out.push_back({targets[t].box, static_cast<int>(t)});
    }
  }
  return out;
}

Assignment OneToManyMatch(const Predictions& preds, const Targets& targets,
                          int k, const MatchWeights& w) {
  const Targets replicas = ReplicateTargets(targets, k);
  Assignment a = Hungarian(BuildCostMatrix(preds, replicas, w));
  for (MatchPair& p : a.pairs) p.target = replicas[p.target].source;
  return a;
}

}  // namespace dualdet
