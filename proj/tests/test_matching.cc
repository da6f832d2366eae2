#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "dualdet/error.h"
#include "dualdet/matching.h"
#include "dualdet/rng.h"
#include "oracles.h"

namespace dualdet {
namespace {

Prediction P(double score, BBox box = {0.5, 0.5, 0.2, 0.2}) { return {box, score}; }
GroundTruthBox T(BBox box = {0.5, 0.5, 0.2, 0.2}) { return {box, -1}; }

void ExpectWellFormed(const Assignment& a, size_t n_preds, size_t n_targets) {
  std::set<int> preds, targets;
  for (const MatchPair& p : a.pairs) {
    EXPECT_TRUE(preds.insert(p.pred).second);
    EXPECT_TRUE(targets.insert(p.target).second);
    EXPECT_LT(static_cast<size_t>(p.target), n_targets);
  }
  for (int u : a.unmatched_predictions) EXPECT_TRUE(preds.insert(u).second);
  EXPECT_EQ(preds.size(), n_preds);
  EXPECT_EQ(a.pairs.size(), std::min(n_preds, n_targets));
}

TEST(BuildCostMatrix, Examples) {
  EXPECT_DOUBLE_EQ(BuildCostMatrix({P(1.0)}, {T()})(0, 0), 0.0);
  EXPECT_NEAR(BuildCostMatrix({P(0.8)}, {T()})(0, 0), 0.4, 1e-12);
  // Box moved so that the L1 distance is 0.4.
  const CostMatrix c = BuildCostMatrix({P(0.8, {0.5, 0.5, 0.2, 0.2})}, {T({0.4, 0.6, 0.1, 0.3})});
  EXPECT_NEAR(c(0, 0), 2.4, 1e-12);
}

TEST(BuildCostMatrix, ShapeAndSign) {
  Rng rng(3);
  Predictions preds;
  Targets targets;
  for (int i = 0; i < 7; ++i) preds.push_back(P(rng.Uniform(), oracle::RandomBox(rng)));
  for (int i = 0; i < 4; ++i) targets.push_back(T(oracle::RandomBox(rng)));
  const CostMatrix c = BuildCostMatrix(preds, targets);
  EXPECT_EQ(c.rows(), 7u);
  EXPECT_EQ(c.cols(), 4u);
  for (double v : c.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
}

TEST(BuildCostMatrix, EmptyInputThrows) {
  try {
    BuildCostMatrix({}, {T()});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyInput);
  }
  EXPECT_THROW(BuildCostMatrix({P(0.5)}, {}), Error);
}

TEST(Hungarian, SingleEntry) {
  const Assignment a = Hungarian(CostMatrix(1, 1, {7.0}));
  ASSERT_EQ(a.pairs.size(), 1u);
  EXPECT_EQ(a.pairs[0], (MatchPair{0, 0}));
  EXPECT_EQ(a.total_cost, 7.0);
}

TEST(Hungarian, TwoByTwo) {
  const Assignment a = Hungarian(CostMatrix(2, 2, {1, 2, 2, 1}));
  EXPECT_EQ(a.pairs, (std::vector<MatchPair>{{0, 0}, {1, 1}}));
  EXPECT_EQ(a.total_cost, 2.0);
}

TEST(Hungarian, MorePredictionsThanTargets) {
  const Assignment a = Hungarian(CostMatrix(3, 2, {5, 1, 2, 9, 3, 3}));
  EXPECT_EQ(a.pairs, (std::vector<MatchPair>{{0, 1}, {1, 0}}));
  EXPECT_EQ(a.unmatched_predictions, std::vector<int>{2});
  EXPECT_EQ(a.total_cost, 3.0);
  EXPECT_EQ(a.total_cost, oracle::BruteForceAssignment(CostMatrix(3, 2, {5, 1, 2, 9, 3, 3})));
}

TEST(Hungarian, RejectsNonFiniteCost) {
  try {
    Hungarian(CostMatrix(2, 2, {1, NAN, 2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidCost);
  }
  EXPECT_THROW(Hungarian(CostMatrix(1, 2, {1, INFINITY})), Error);
}

TEST(Hungarian, EmptyDimensions) {
  const Assignment a = Hungarian(CostMatrix(3, 0));
  EXPECT_TRUE(a.pairs.empty());
  EXPECT_EQ(a.unmatched_predictions.size(), 3u);
  EXPECT_TRUE(Hungarian(CostMatrix(0, 4)).pairs.empty());
}

TEST(Hungarian, MatchesBruteForceOnRandomRealMatrices) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const size_t r = rng.UniformInt(1, 6);
    const size_t c = rng.UniformInt(1, 6);
    const CostMatrix m = oracle::RandomCost(rng, r, c);
    const Assignment a = Hungarian(m);
    ExpectWellFormed(a, r, c);
    EXPECT_NEAR(a.total_cost, oracle::BruteForceAssignment(m), 1e-9);
  }
}

TEST(Hungarian, ConstantShiftKeepsUniqueOptimum) {
  Rng rng(77);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const size_t r = rng.UniformInt(1, 5);
    const size_t c = rng.UniformInt(r, 6);  // every prediction matched
    const CostMatrix m = oracle::RandomCost(rng, r, c, /*integer=*/true);
    CostMatrix shifted = m;
    for (size_t i = 0; i < r; ++i) {
      for (size_t j = 0; j < c; ++j) shifted(i, j) += 3.0;
    }
    const Assignment a = Hungarian(m);
    const Assignment b = Hungarian(shifted);
    EXPECT_EQ(b.total_cost, a.total_cost + 3.0 * a.pairs.size());
    // Compare pairs only when the optimum is unique: perturbing any pair's
    // cost up by one must make the solver pick something else or raise cost.
    CostMatrix bumped = m;
    bumped(a.pairs[0].pred, a.pairs[0].target) += 1.0;
    if (Hungarian(bumped).total_cost > a.total_cost) {
      bool unique = true;
      for (const MatchPair& p : a.pairs) {
        CostMatrix alt = m;
        alt(p.pred, p.target) += 1.0;
        unique = unique && Hungarian(alt).total_cost > a.total_cost;
      }
      if (unique) {
        EXPECT_EQ(a.pairs, b.pairs);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(OneToOneMatch, SingleTargetLeavesOthersUnmatched) {
  Rng rng(1);
  Predictions preds;
  for (int i = 0; i < 6; ++i) preds.push_back(P(rng.Uniform(), oracle::RandomBox(rng)));
  const Assignment a = OneToOneMatch(preds, {T()});
  EXPECT_EQ(a.pairs.size(), 1u);
  EXPECT_EQ(a.unmatched_predictions.size(), 5u);
}

TEST(OneToOneMatch, PrefersConfidentPrediction) {
  const Assignment a = OneToOneMatch({P(0.9), P(0.1)}, {T()});
  ASSERT_EQ(a.pairs.size(), 1u);
  EXPECT_EQ(a.pairs[0].pred, 0);
  EXPECT_NEAR(a.total_cost, 0.2, 1e-12);
}

TEST(OneToOneMatch, PerfectPredictionsCostNothing) {
  const BBox a{0.2, 0.3, 0.1, 0.2}, b{0.7, 0.6, 0.3, 0.2};
  const Assignment m = OneToOneMatch({P(1.0, b), P(1.0, a)}, {T(a), T(b)});
  EXPECT_EQ(m.total_cost, 0.0);
  EXPECT_EQ(m.pairs, (std::vector<MatchPair>{{0, 1}, {1, 0}}));
}

TEST(ReplicateTargets, Examples) {
  const Targets one = {T({0.3, 0.3, 0.1, 0.1})};
  const Targets k1 = ReplicateTargets(one, 1);
  ASSERT_EQ(k1.size(), 1u);
  EXPECT_EQ(k1[0].box, one[0].box);
  EXPECT_EQ(ReplicateTargets({T(), T()}, 6).size(), 12u);
  const Targets r = ReplicateTargets({T(), T(), T()}, 2);
  std::vector<int> sources;
  for (const auto& t : r) sources.push_back(t.source);
  EXPECT_EQ(sources, (std::vector<int>{0, 0, 1, 1, 2, 2}));
}

TEST(ReplicateTargets, RejectsNonPositiveK) {
  try {
    ReplicateTargets({T()}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidParameter);
  }
}

TEST(OneToManyMatch, KOneEqualsOneToOne) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    Predictions preds;
    Targets targets;
    const int n = rng.UniformInt(1, 8), m = rng.UniformInt(1, 4);
    for (int i = 0; i < n; ++i) preds.push_back(P(rng.Uniform(), oracle::RandomBox(rng)));
    for (int i = 0; i < m; ++i) targets.push_back(T(oracle::RandomBox(rng)));
    const Assignment a = OneToManyMatch(preds, targets, 1);
    const Assignment b = OneToOneMatch(preds, targets);
    EXPECT_EQ(a.total_cost, b.total_cost);
    EXPECT_EQ(a.pairs, b.pairs);
  }
}

TEST(OneToManyMatch, DuplicatePredictionsAllMatchOneTarget) {
  const Assignment a = OneToManyMatch({P(0.9), P(0.9), P(0.9)}, {T()}, 3);
  ASSERT_EQ(a.pairs.size(), 3u);
  for (const MatchPair& p : a.pairs) EXPECT_EQ(p.target, 0);
}

TEST(OneToManyMatch, CapacityAndBruteForce) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = std::vector<int>{2, 3, 6}[trial % 3];
    const int m = rng.UniformInt(1, 2);
    const int n = rng.UniformInt(1, std::min(8, k * m + 2));
    Predictions preds;
    Targets targets;
    for (int i = 0; i < n; ++i) preds.push_back(P(rng.Uniform(), oracle::RandomBox(rng)));
    for (int i = 0; i < m; ++i) targets.push_back(T(oracle::RandomBox(rng)));
    const Assignment a = OneToManyMatch(preds, targets, k);
    std::vector<int> load(m, 0);
    for (const MatchPair& p : a.pairs) ++load[p.target];
    for (int l : load) EXPECT_LE(l, k);
    EXPECT_EQ(a.pairs.size(), std::min<size_t>(n, static_cast<size_t>(k) * m));
    EXPECT_NEAR(a.total_cost, oracle::BruteForceCapacity(BuildCostMatrix(preds, targets), k), 1e-9);
  }
}

TEST(OneToManyMatch, FivePredictionsTwoTargets) {
  Rng rng(4);
  Predictions preds;
  for (int i = 0; i < 5; ++i) preds.push_back(P(rng.Uniform(), oracle::RandomBox(rng)));
  const Assignment a = OneToManyMatch(preds, {T({0.3, 0.3, 0.2, 0.2}), T({0.7, 0.7, 0.2, 0.2})}, 2);
  std::vector<int> load(2, 0);
  for (const MatchPair& p : a.pairs) ++load[p.target];
  EXPECT_LE(load[0], 2);
  EXPECT_LE(load[1], 2);
  EXPECT_GE(a.unmatched_predictions.size(), 1u);
}

// Dropping the costliest replica pair of every target from the optimal
// (K+1)-solution leaves a feasible K-solution, so the mean cost per matched
// pair can only grow with K.
TEST(OneToManyMatch, MeanPairCostIsNonDecreasingInK) {
  Rng rng(55);
  bool saw_increase = false;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = rng.UniformInt(1, 3);
    const int n = 6 * m + rng.UniformInt(0, 3);
    Predictions preds;
    Targets targets;
    for (int i = 0; i < n; ++i) preds.push_back(P(rng.Uniform(), oracle::RandomBox(rng)));
    for (int i = 0; i < m; ++i) targets.push_back(T(oracle::RandomBox(rng)));
    double prev = -1.0;
    for (int k = 1; k <= 6; ++k) {
      const Assignment a = OneToManyMatch(preds, targets, k);
      const double mean = a.total_cost / static_cast<double>(a.pairs.size());
      EXPECT_GE(mean, prev - 1e-12) << "k=" << k;
      if (prev >= 0.0 && mean > prev + 1e-9) saw_increase = true;
      prev = mean;
    }
  }
  EXPECT_TRUE(saw_increase);
}

}  // namespace
}  // namespace dualdet
