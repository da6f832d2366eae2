#ifndef DUALDET_EVAL_H_
#define DUALDET_EVAL_H_

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dualdet/detection.h"

namespace dualdet {

// Detections and ground truth of one image. Images are processed in vector
// order; the order only matters for breaking exact score ties.
struct EvalImage {
  int64_t image_id = 0;
  Predictions preds;
  Targets gts;
};

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // one per ranked detection
  int tp = 0;
  int fp = 0;
  int total_gt = 0;
};

enum class ApScheme { kAllPoint, k101Point };

struct PrfEntry {
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  double map = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::optional<double> ar_large;
  std::vector<std::pair<double, double>> per_threshold;  // (iou, AP)
  std::vector<PrfEntry> prf;
};

struct EvalOptions {
  int max_dets = 100;
  double large_area = 0.04;  // area fraction above which a GT is "large"
  double prf_score_threshold = 0.5;
  std::vector<double> prf_ious = {0.8, 0.9};
};

// 0.50, 0.55, ..., 0.95
std::vector<double> CocoIouThresholds();

// COCO rule: in the given order, each prediction takes the unmatched ground
// truth with the highest IoU >= iou_t (later GT wins exact ties), else it
// is a false positive. `preds` must already be sorted by descending score.
std::vector<bool> GreedyMatchForEval(const Predictions& preds,
                                     const Targets& gts, double iou_t);

// Builds the curve from TP flags listed in ranking order.
PRCurve BuildPRCurve(const std::vector<bool>& ranked_tp, int total_gt);

double AveragePrecision(const PRCurve& curve,
                        ApScheme scheme = ApScheme::k101Point);

// Single-class COCO bbox evaluation: per image top max_dets by score, global
// ranking across images, 101-point AP at each COCO IoU threshold. Throws
// kUndefinedMetric when there is no ground truth. Also fills ar_large when
// large ground truth exists, and the P/R/F1 entries of opts.prf_ious.
MetricsReport MapCoco(const std::vector<EvalImage>& images,
                      const EvalOptions& opts = {});

// Recall averaged over the COCO IoU thresholds, restricted to ground truth
// with area > opts.large_area. nullopt when no such ground truth exists.
std::optional<double> ArLarge(const std::vector<EvalImage>& images,
                              const EvalOptions& opts = {});

// Detections with score > score_t, greedily matched at iou_t.
PrfEntry PrfAtIou(const std::vector<EvalImage>& images, double iou_t,
                  double score_t = 0.5);

}  // namespace dualdet

#endif  // DUALDET_EVAL_H_
