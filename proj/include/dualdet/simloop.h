#ifndef DUALDET_SIMLOOP_H_
#define DUALDET_SIMLOOP_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dualdet/augment.h"
#include "dualdet/data.h"
#include "dualdet/detector.h"
#include "dualdet/eval.h"
#include "dualdet/losses.h"
#include "json.hpp"

namespace dualdet {

struct TrainConfig {
  int epochs = 60;
  int burn_in_epochs = 10;
  double lr = 1.0;
  // Box-regression parameters step with lr * box_lr_scale.
  double box_lr_scale = 0.001;
  // Step decay: lr is multiplied by lr_drop_factor from epoch
  // ceil(lr_drop_at * epochs) onward.
  double lr_drop_at = 140.0 / 150.0;
  double lr_drop_factor = 0.1;
  double ema_momentum = 0.99;
  double tau = 0.7;
  int k = 6;
  int stages = 1;
  // Branch weights: loss = o2o_weight * L_o2o + o2m_weight(epoch) * L_o2m.
  // The one-to-many weight is switched off after o2m_phase of the
  // post-burn-in epochs.
  double o2o_weight = 1.0;
  double o2m_weight = 1.0;
  double o2m_phase = 0.7;
  uint64_t seed = 0;

  DetectorConfig detector;
  LossConfig loss;  // carries omega
  AugmentConfig augment;

  // Head (and optional suppression) used for evaluation and for the
  // teacher's pseudo-labels.
  Head inference_head = Head::kO2O;
  bool inference_nms = false;
  double nms_iou = 0.5;

  double duplicate_score = 0.5;
  double duplicate_iou = 0.5;
  EvalOptions eval;

  void Validate() const;
  double O2MWeightAt(int epoch) const;
  double LrAt(int epoch) const;
  nlohmann::json ToJson() const;
};

enum class Strategy { kO2OOnly, kO2MOnly, kDual };

const char* StrategyName(Strategy s);
TrainConfig WithStrategy(TrainConfig cfg, Strategy s);

struct EpochRecord {
  int epoch = 0;
  double sup_loss = 0.0;        // mean over the epoch's iterations
  double unsup_loss = 0.0;      // mean over the epoch's iterations
  double pseudo_per_iter = 0.0;  // kept pseudo-labels per unlabeled step
  double kept_ratio = 0.0;       // kept / teacher outputs
  std::optional<double> eval_map;
  std::optional<double> duplicate_rate;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  DetectorParams student;
  DetectorParams teacher;
  DetectorParams burn_in_student;
  TrainHistory history;
  uint64_t unlabeled_steps = 0;
  uint64_t pseudo_labels = 0;

  double mean_pseudo_per_step() const {
    return unlabeled_steps == 0 ? 0.0
                                : static_cast<double>(pseudo_labels) / unlabeled_steps;
  }
};

// Per-iteration snapshot handed to an optional observer.
struct StepTrace {
  int64_t iteration = 0;
  int epoch = 0;
  bool teacher_active = false;
  int pseudo_labels = 0;
  const DetectorParams* teacher_before = nullptr;
  const DetectorParams* teacher_after = nullptr;
  const DetectorParams* student_after = nullptr;
};

using StepObserver = std::function<void(const StepTrace&)>;

// Per epoch and labeled scene (seeded order): weak view, both heads,
// loss_o2o + w * loss_o2m against ground truth, SGD step.
TrainResult TrainSupervised(const Dataset& labeled, const TrainConfig& cfg,
                            const Dataset* holdout = nullptr,
                            const StepObserver& observer = {});

// Same schedule; after burn-in each step also pairs the labeled scene with
// the next unlabeled scene: teacher on the weak view -> threshold ->
// boxes mapped to the strong view -> student loss on the strong view,
// weighted by omega. The teacher is an EMA of the student.
TrainResult TrainSemiSupervised(const Dataset& labeled, const Dataset& unlabeled,
                                const TrainConfig& cfg,
                                const Dataset* holdout = nullptr,
                                const StepObserver& observer = {});

// Inference head output, with suppression when cfg.inference_nms is set.
Predictions Infer(const DetectorParams& params, const Raster& raster,
                  const TrainConfig& cfg);

struct EvalSummary {
  MetricsReport metrics;
  double duplicate_rate = 0.0;  // on the unsuppressed inference head output
  uint64_t nms_calls = 0;
};

EvalSummary EvaluateParams(const DetectorParams& params, const Dataset& scenes,
                           const TrainConfig& cfg);

struct ThresholdRow {
  double tau = 0.0;
  double map = 0.0;
  double pseudo_per_iter = 0.0;
};

std::vector<ThresholdRow> SweepThreshold(const Dataset& labeled,
                                         const Dataset& unlabeled,
                                         const Dataset& holdout,
                                         const TrainConfig& cfg,
                                         const std::vector<double>& taus);

struct QueryGrids {
  GridSpec o2o;
  GridSpec o2m;  // 0x0 disables the one-to-many branch
};

struct QueryRow {
  int n = 0;
  int t = 0;
  double map = 0.0;
};

std::vector<QueryRow> SweepQueries(const Dataset& labeled,
                                   const Dataset& unlabeled,
                                   const Dataset& holdout,
                                   const TrainConfig& cfg,
                                   const std::vector<QueryGrids>& grids);

// Grid layouts for 30 one-to-one queries and 0/200/400/600 one-to-many.
std::vector<QueryGrids> DefaultQueryGrids();

struct StrategyRow {
  Strategy strategy = Strategy::kDual;
  double map = 0.0;
  double duplicate_rate = 0.0;  // before any suppression
  uint64_t nms_calls = 0;       // during training and evaluation
  double wall_seconds = 0.0;
};

// o2o-only, o2m-only with NMS at inference, and dual, under one seed.
std::vector<StrategyRow> AblateStrategies(const Dataset& labeled,
                                          const Dataset& unlabeled,
                                          const Dataset& holdout,
                                          const TrainConfig& cfg);

struct Benchmark {
  DatasetSplit split;
  Dataset holdout;
};

// Generated train pool split by labeled fraction plus a separately seeded
// held-out set.
Benchmark MakeBenchmark(uint64_t seed, int n_train = 200, int n_holdout = 100,
                        double labeled_fraction = 0.1,
                        const LayoutConfig& layout = {});

}  // namespace dualdet

#endif  // DUALDET_SIMLOOP_H_
