#ifndef DUALDET_LOSSES_H_
#define DUALDET_LOSSES_H_

#include <array>
#include <vector>

#include "dualdet/detection.h"
#include "dualdet/matching.h"

namespace dualdet {

struct LossConfig {
  double alpha1 = 2.0;  // classification weight
  double alpha2 = 5.0;  // box weight
  double omega = 1.0;   // unsupervised weight
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;

  MatchWeights match_weights() const { return {alpha1, alpha2}; }
  void Validate() const;
};

// Scores are clamped to [kScoreEps, 1 - kScoreEps] before any logarithm.
inline constexpr double kScoreEps = 1e-6;

struct StageLoss {
  double cls = 0.0;
  double box = 0.0;
};

struct LossReport {
  double cls = 0.0;
  double box = 0.0;
  double total = 0.0;
  std::vector<StageLoss> per_layer;
};

struct PredGradient {
  double d_score = 0.0;
  std::array<double, 4> d_box{};  // cx, cy, w, h
};

// Sigmoid focal loss averaged over all predictions. Matched predictions are
// positives, the rest negatives.
double FocalClsLoss(const Predictions& preds, const Assignment& assignment,
                    const LossConfig& cfg = {});

// Mean L1 box distance over matched pairs; 0 when nothing is matched.
double L1RegLoss(const Predictions& preds, const Targets& targets,
                 const Assignment& assignment);

// Per stage: one-to-one matching, then cls + box losses. Stage reports are
// summed. An empty target list makes every prediction a negative.
LossReport LossO2O(const std::vector<Predictions>& stage_preds,
                   const Targets& targets, const LossConfig& cfg = {});

// Same, with each target replicated k times before matching.
LossReport LossO2M(const std::vector<Predictions>& stage_preds,
                   const Targets& targets, int k, const LossConfig& cfg = {});

double CombinedLoss(double supervised, double unsupervised, double omega);

// Gradient of alpha1 * cls + alpha2 * box with the assignment held fixed.
// d_score is taken with respect to the raw score; it is 0 where clamping is
// active. The L1 subgradient at zero residual is 0.
std::vector<PredGradient> LossGradients(const Predictions& preds,
                                        const Targets& targets,
                                        const Assignment& assignment,
                                        const LossConfig& cfg = {});

// Assignment helpers that treat an empty target list as "all negatives"
// instead of an error; used by the loss and training paths.
Assignment MatchO2OOrEmpty(const Predictions& preds, const Targets& targets,
                           const MatchWeights& w);
Assignment MatchO2MOrEmpty(const Predictions& preds, const Targets& targets,
                           int k, const MatchWeights& w);

}  // namespace dualdet

#endif  // DUALDET_LOSSES_H_
