#include <cmath>

#include <gtest/gtest.h>

#include "dualdet/error.h"
#include "dualdet/pseudo.h"
#include "dualdet/report.h"
#include "dualdet/simloop.h"

namespace dualdet {
namespace {

TrainConfig SmallConfig() {
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.burn_in_epochs = 2;
  cfg.seed = 3;
  return cfg;
}

const Benchmark& SmallBench() {
  static const Benchmark b = MakeBenchmark(7, 30, 10, 0.2);
  return b;
}

TEST(TrainConfig, DefaultsAndSchedules) {
  TrainConfig cfg;
  EXPECT_EQ(cfg.tau, 0.7);
  EXPECT_EQ(cfg.k, 6);
  EXPECT_EQ(cfg.detector.o2o_grid.size(), 30);
  EXPECT_EQ(cfg.detector.o2m_grid.size(), 400);
  EXPECT_EQ(cfg.loss.omega, 1.0);
  cfg.epochs = 20;
  cfg.burn_in_epochs = 10;
  EXPECT_EQ(cfg.O2MWeightAt(0), 1.0);
  EXPECT_EQ(cfg.O2MWeightAt(16), 1.0);
  EXPECT_EQ(cfg.O2MWeightAt(17), 0.0);
  cfg.epochs = 150;
  EXPECT_EQ(cfg.LrAt(139), cfg.lr);
  EXPECT_NEAR(cfg.LrAt(140), 0.1 * cfg.lr, 1e-15);
}

TEST(TrainConfig, ValidateRejectsBadValues) {
  TrainConfig cfg;
  cfg.burn_in_epochs = cfg.epochs + 1;
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = {};
  cfg.ema_momentum = 1.0;
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = {};
  cfg.k = 0;
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = {};
  cfg.detector.o2o_grid = {0, 0};
  EXPECT_THROW(cfg.Validate(), Error);
}

TEST(TrainSupervised, EmptyLabeledSetThrows) {
  EXPECT_THROW(TrainSupervised({}, SmallConfig()), Error);
}

TEST(TrainSupervised, ZeroLearningRateLeavesParamsUnchanged) {
  TrainConfig cfg = SmallConfig();
  cfg.lr = 0.0;
  const TrainResult r = TrainSupervised(SmallBench().split.labeled, cfg);
  EXPECT_EQ(r.student, DetectorParams::Zeros());
  ASSERT_EQ(r.history.epochs.size(), 6u);
}

TEST(TrainSupervised, DeterministicHistory) {
  const auto& b = SmallBench();
  const TrainResult a = TrainSupervised(b.split.labeled, SmallConfig(), &b.holdout);
  const TrainResult c = TrainSupervised(b.split.labeled, SmallConfig(), &b.holdout);
  EXPECT_EQ(a.student, c.student);
  const nlohmann::json echo = SmallConfig().ToJson();
  EXPECT_EQ(HistoryToCsv(a.history, echo), HistoryToCsv(c.history, echo));
  EXPECT_TRUE(a.history.epochs.back().eval_map.has_value());
}

TEST(TrainSupervised, SingleSceneLossDecreasesAfterWarmup) {
  TrainConfig cfg = SmallConfig();
  cfg.epochs = 30;
  cfg.burn_in_epochs = 0;
  cfg.o2m_phase = 1.0;
  const Dataset one = {SmallBench().split.labeled[0]};
  const TrainResult r = TrainSupervised(one, cfg);
  EXPECT_LT(r.history.epochs.back().sup_loss, r.history.epochs[5].sup_loss);
  EXPECT_LT(r.history.epochs[5].sup_loss, r.history.epochs[0].sup_loss);
}

TEST(TrainSupervised, DivergenceIsReported) {
  TrainConfig cfg = SmallConfig();
  cfg.lr = INFINITY;
  try {
    TrainSupervised(SmallBench().split.labeled, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDivergence);
  }
}

TEST(TrainSupervised, BeatsUntrainedModel) {
  const Benchmark b = MakeBenchmark(1, 60, 30, 0.5);
  TrainConfig cfg = SmallConfig();
  cfg.epochs = 15;
  const TrainResult r = TrainSupervised(b.split.labeled, cfg);
  const double trained = EvaluateParams(r.student, b.holdout, cfg).metrics.map;
  const double untrained = EvaluateParams(DetectorParams::Zeros(), b.holdout, cfg).metrics.map;
  EXPECT_GT(trained, untrained);
}

TEST(TrainSemiSupervised, EmptyUnlabeledMatchesSupervised) {
  const auto& b = SmallBench();
  const TrainResult sup = TrainSupervised(b.split.labeled, SmallConfig());
  const TrainResult semi = TrainSemiSupervised(b.split.labeled, {}, SmallConfig());
  EXPECT_EQ(sup.student, semi.student);
  EXPECT_EQ(semi.pseudo_labels, 0u);
}

TEST(TrainSemiSupervised, TauOneMatchesSupervised) {
  const auto& b = SmallBench();
  TrainConfig cfg = SmallConfig();
  cfg.tau = 1.0;
  const TrainResult sup = TrainSupervised(b.split.labeled, cfg);
  const TrainResult semi = TrainSemiSupervised(b.split.labeled, b.split.unlabeled, cfg);
  EXPECT_EQ(semi.pseudo_labels, 0u);
  EXPECT_GT(semi.unlabeled_steps, 0u);
  EXPECT_EQ(sup.student, semi.student);
}

TEST(TrainSemiSupervised, OmegaZeroMatchesSupervised) {
  const auto& b = SmallBench();
  TrainConfig cfg = SmallConfig();
  cfg.loss.omega = 0.0;
  cfg.tau = 0.3;
  const TrainResult sup = TrainSupervised(b.split.labeled, cfg);
  const TrainResult semi = TrainSemiSupervised(b.split.labeled, b.split.unlabeled, cfg);
  EXPECT_GT(semi.pseudo_labels, 0u);
  EXPECT_EQ(sup.student, semi.student);
}

TEST(TrainSemiSupervised, TeacherFollowsEmaRecurrence) {
  const auto& b = SmallBench();
  TrainConfig cfg = SmallConfig();
  int64_t first_active = -1;
  int checked = 0;
  const StepObserver observer = [&](const StepTrace& t) {
    if (!t.teacher_active) {
      EXPECT_LT(t.epoch, cfg.burn_in_epochs);
      return;
    }
    if (first_active < 0) first_active = t.iteration;
    if ((t.iteration - first_active) % 4 != 0 || checked >= 5) return;
    const DetectorParams shadow = EmaUpdate(*t.teacher_before, *t.student_after, cfg.ema_momentum);
    EXPECT_EQ(shadow, *t.teacher_after);
    ++checked;
  };
  TrainSemiSupervised(b.split.labeled, b.split.unlabeled, cfg, nullptr, observer);
  EXPECT_EQ(checked, 5);
}

TEST(TrainSemiSupervised, DeterministicAndCountsPseudoLabels) {
  const auto& b = SmallBench();
  TrainConfig cfg = SmallConfig();
  const TrainResult x = TrainSemiSupervised(b.split.labeled, b.split.unlabeled, cfg);
  const TrainResult y = TrainSemiSupervised(b.split.labeled, b.split.unlabeled, cfg);
  EXPECT_EQ(x.student, y.student);
  EXPECT_EQ(x.teacher, y.teacher);
  EXPECT_EQ(x.pseudo_labels, y.pseudo_labels);
  for (int e = 0; e < cfg.burn_in_epochs; ++e) EXPECT_EQ(x.history.epochs[e].pseudo_per_iter, 0.0);
  for (const auto& rec : x.history.epochs) {
    EXPECT_GE(rec.kept_ratio, 0.0);
    EXPECT_LE(rec.kept_ratio, 1.0);
  }
}

TEST(SweepThreshold, CountsNonIncreasingInTau) {
  const auto& b = SmallBench();
  const auto rows =
      SweepThreshold(b.split.labeled, b.split.unlabeled, b.holdout, SmallConfig(),
                     {0.5, 0.6, 0.7, 0.8, 1.0});
  ASSERT_EQ(rows.size(), 5u);
  for (size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LE(rows[i].pseudo_per_iter, rows[i - 1].pseudo_per_iter);
  }
  EXPECT_EQ(rows.back().pseudo_per_iter, 0.0);
  EXPECT_THROW(SweepThreshold(b.split.labeled, b.split.unlabeled, b.holdout, SmallConfig(), {}),
               Error);
}

TEST(SweepQueries, IncludesDefaultPairAndDisabledBranch) {
  const auto& b = SmallBench();
  const auto grids = DefaultQueryGrids();
  const std::vector<QueryGrids> three(grids.begin(), grids.begin() + 3);
  const auto rows = SweepQueries(b.split.labeled, b.split.unlabeled, b.holdout, SmallConfig(), three);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].t, 0);
  EXPECT_EQ(rows[2].n, 30);
  EXPECT_EQ(rows[2].t, 400);
  const auto again = SweepQueries(b.split.labeled, b.split.unlabeled, b.holdout, SmallConfig(), three);
  EXPECT_EQ(QuerySweepToCsv(rows, {}), QuerySweepToCsv(again, {}));
}

TEST(AblateStrategies, DualNeverSuppressesAndTableIsStable) {
  const auto& b = SmallBench();
  const auto rows = AblateStrategies(b.split.labeled, b.split.unlabeled, b.holdout, SmallConfig());
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].strategy, Strategy::kDual);
  EXPECT_EQ(rows[2].nms_calls, 0u);
  EXPECT_EQ(rows[0].nms_calls, 0u);
  EXPECT_GT(rows[1].nms_calls, 0u);
  const auto again = AblateStrategies(b.split.labeled, b.split.unlabeled, b.holdout, SmallConfig());
  EXPECT_EQ(StrategyTableToCsv(rows, {}), StrategyTableToCsv(again, {}));
}

TEST(Infer, DualHeadMakesNoNmsCall) {
  const uint64_t before = NmsCallCount();
  const TrainConfig cfg = WithStrategy(SmallConfig(), Strategy::kDual);
  const Predictions p = Infer(DetectorParams::Zeros(), SmallBench().holdout[0].raster, cfg);
  EXPECT_EQ(p.size(), 30u);
  EXPECT_EQ(NmsCallCount(), before);
}

}  // namespace
}  // namespace dualdet
