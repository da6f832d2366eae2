#ifndef DUALDET_PSEUDO_H_
#define DUALDET_PSEUDO_H_

#include <cstdint>
#include <vector>

#include "dualdet/detection.h"

namespace dualdet {

struct FilterConfig {
  double tau = 0.7;
};

struct PseudoLabelSet {
  Targets boxes;
  std::vector<double> source_scores;  // parallel to boxes, each > tau
};

// Keeps predictions with score strictly greater than tau, in input order.
// Boxes are taken verbatim from the teacher.
PseudoLabelSet FilterPseudoLabels(const Predictions& teacher_preds,
                                  const FilterConfig& cfg = {});

// Greedy suppression in descending score order; a prediction is dropped when
// its IoU with any kept one exceeds iou_threshold. Ties in score keep input
// order. Output is sorted by descending score.
Predictions Nms(const Predictions& preds, double iou_threshold);

// Number of Nms() calls made by this process. Inference paths that are
// meant to be suppression-free are checked against this counter.
uint64_t NmsCallCount();

// Mean over ground truths of the number of predictions with
// score > score_threshold and IoU > iou_threshold against that ground truth.
// Returns 0 when gts is empty.
double DuplicateRate(const Predictions& preds, const Targets& gts,
                     double score_threshold, double iou_threshold);

}  // namespace dualdet

#endif  // DUALDET_PSEUDO_H_
