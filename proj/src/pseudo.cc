#include "dualdet/pseudo.h"

#include <algorithm>
#include <atomic>
#include <numeric>

#include "dualdet/error.h"

namespace dualdet {
namespace {

std::atomic<uint64_t> g_nms_calls{0};

}  // namespace

PseudoLabelSet FilterPseudoLabels(const Predictions& teacher_preds,
                                  const FilterConfig& cfg) {
  if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) {
    throw Error(ErrorCode::kInvalidParameter, "tau must lie in [0, 1]");
  }
  PseudoLabelSet out;
  for (const Prediction& p : teacher_preds) {
    if (p.score > cfg.tau) {
      out.boxes.push_back({p.box, -1});
      out.source_scores.push_back(p.score);
    }
  }
  return out;
}

Predictions Nms(const Predictions& preds, double iou_threshold) {
  g_nms_calls.fetch_add(1, std::memory_order_relaxed);
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw Error(ErrorCode::kInvalidParameter,
                "NMS IoU threshold must lie in (0, 1)");
  }
  std::vector<size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return preds[a].score > preds[b].score;
  });

  Predictions kept;
  for (size_t idx : order) {
    const Prediction& cand = preds[idx];
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](const Prediction& k) {
          return Iou(k.box, cand.box) > iou_threshold;
        });
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

uint64_t NmsCallCount() { return g_nms_calls.load(std::memory_order_relaxed); }

double DuplicateRate(const Predictions& preds, const Targets& gts,
                     double score_threshold, double iou_threshold) {
  if (gts.empty()) return 0.0;
  size_t count = 0;
  for (const GroundTruthBox& gt : gts) {
    for (const Prediction& p : preds) {
      if (p.score > score_threshold && Iou(p.box, gt.box) > iou_threshold) {
        ++count;
      }
    }
  }
  return static_cast<double>(count) / static_cast<double>(gts.size());
}

}  // namespace dualdet
