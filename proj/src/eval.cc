#include "dualdet/eval.h"

#include <algorithm>
#include <numeric>

#include "dualdet/error.h"

namespace dualdet {
namespace {

struct RankedDet {
  double score;
  bool tp;
};

// Top max_dets predictions of an image by descending score (stable).
Predictions TopDetections(const Predictions& preds, int max_dets) {
  std::vector<size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return preds[a].score > preds[b].score;
  });
  if (max_dets >= 0 && order.size() > static_cast<size_t>(max_dets)) {
    order.resize(max_dets);
  }
  Predictions out;
  out.reserve(order.size());
  for (size_t i : order) out.push_back(preds[i]);
  return out;
}

int CountGt(const std::vector<EvalImage>& images) {
  int n = 0;
  for (const auto& im : images) n += static_cast<int>(im.gts.size());
  return n;
}

}  // namespace

std::vector<double> CocoIouThresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

std::vector<bool> GreedyMatchForEval(const Predictions& preds,
                                     const Targets& gts, double iou_t) {
  std::vector<bool> tp(preds.size(), false);
  std::vector<char> gt_used(gts.size(), 0);
  const double floor_iou = std::min(iou_t, 1.0 - 1e-10);
  for (size_t d = 0; d < preds.size(); ++d) {
    double best = floor_iou;
    int match = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      const double iou = Iou(preds[d].box, gts[g].box);
      if (iou < best) continue;
      best = iou;
      match = static_cast<int>(g);
    }
    if (match >= 0) {
      gt_used[match] = 1;
      tp[d] = true;
    }
  }
  return tp;
}

PRCurve BuildPRCurve(const std::vector<bool>& ranked_tp, int total_gt) {
  PRCurve curve;
  curve.total_gt = total_gt;
  curve.points.reserve(ranked_tp.size());
  for (bool is_tp : ranked_tp) {
    if (is_tp) {
      ++curve.tp;
    } else {
      ++curve.fp;
    }
    const double recall =
        total_gt > 0 ? static_cast<double>(curve.tp) / total_gt : 0.0;
    const double precision =
        static_cast<double>(curve.tp) / static_cast<double>(curve.tp + curve.fp);
    curve.points.push_back({recall, precision});
  }
  return curve;
}

double AveragePrecision(const PRCurve& curve, ApScheme scheme) {
  if (curve.total_gt <= 0) {
    throw Error(ErrorCode::kUndefinedMetric, "AP is undefined without ground truth");
  }
  const size_t n = curve.points.size();
  // Interpolated precision: running max from the right.
  std::vector<double> envelope(n);
  double running = 0.0;
  for (size_t i = n; i-- > 0;) {
    running = std::max(running, curve.points[i].precision);
    envelope[i] = running;
  }

  if (scheme == ApScheme::kAllPoint) {
    double ap = 0.0;
    double prev_recall = 0.0;
    for (size_t i = 0; i < n; ++i) {
      ap += (curve.points[i].recall - prev_recall) * envelope[i];
      prev_recall = curve.points[i].recall;
    }
    return ap;
  }

  double sum = 0.0;
  size_t idx = 0;
  for (int r = 0; r <= 100; ++r) {
    const double threshold = r / 100.0;
    while (idx < n && curve.points[idx].recall < threshold) ++idx;
    if (idx < n) sum += envelope[idx];
  }
  return sum / 101.0;
}

MetricsReport MapCoco(const std::vector<EvalImage>& images,
                      const EvalOptions& opts) {
  const int total_gt = CountGt(images);
  if (total_gt == 0) {
    throw Error(ErrorCode::kUndefinedMetric, "mAP is undefined without ground truth");
  }
  std::vector<Predictions> top;
  top.reserve(images.size());
  for (const auto& im : images) top.push_back(TopDetections(im.preds, opts.max_dets));

  MetricsReport report;
  for (double t : CocoIouThresholds()) {
    std::vector<RankedDet> dets;
    for (size_t i = 0; i < images.size(); ++i) {
      const std::vector<bool> flags = GreedyMatchForEval(top[i], images[i].gts, t);
      for (size_t d = 0; d < flags.size(); ++d) {
        dets.push_back({top[i][d].score, flags[d]});
      }
    }
    std::stable_sort(dets.begin(), dets.end(),
                     [](const RankedDet& a, const RankedDet& b) {
                       return a.score > b.score;
                     });
    std::vector<bool> ranked;
    ranked.reserve(dets.size());
    for (const auto& d : dets) ranked.push_back(d.tp);
    report.per_threshold.emplace_back(
        t, AveragePrecision(BuildPRCurve(ranked, total_gt)));
  }

  double sum = 0.0;
  for (const auto& [t, ap] : report.per_threshold) sum += ap;
  report.map = sum / static_cast<double>(report.per_threshold.size());
  report.ap50 = report.per_threshold[0].second;
  report.ap75 = report.per_threshold[5].second;
  report.ar_large = ArLarge(images, opts);
  for (double iou : opts.prf_ious) {
    report.prf.push_back(PrfAtIou(images, iou, opts.prf_score_threshold));
  }
  return report;
}

std::optional<double> ArLarge(const std::vector<EvalImage>& images,
                              const EvalOptions& opts) {
  std::vector<Targets> large(images.size());
  int n_large = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    for (const auto& g : images[i].gts) {
      if (Area(g.box) > opts.large_area) large[i].push_back(g);
    }
    n_large += static_cast<int>(large[i].size());
  }
  if (n_large == 0) return std::nullopt;

  std::vector<Predictions> top;
  top.reserve(images.size());
  for (const auto& im : images) top.push_back(TopDetections(im.preds, opts.max_dets));

  const std::vector<double> thresholds = CocoIouThresholds();
  double sum = 0.0;
  for (double t : thresholds) {
    int tp = 0;
    for (size_t i = 0; i < images.size(); ++i) {
      const std::vector<bool> flags = GreedyMatchForEval(top[i], large[i], t);
      tp += static_cast<int>(std::count(flags.begin(), flags.end(), true));
    }
    sum += static_cast<double>(tp) / n_large;
  }
  return sum / static_cast<double>(thresholds.size());
}

PrfEntry PrfAtIou(const std::vector<EvalImage>& images, double iou_t,
                  double score_t) {
  int tp = 0;
  int n_dets = 0;
  const int n_gt = CountGt(images);
  for (const auto& im : images) {
    Predictions kept;
    for (const auto& p : im.preds) {
      if (p.score > score_t) kept.push_back(p);
    }
    kept = TopDetections(kept, -1);
    const std::vector<bool> flags = GreedyMatchForEval(kept, im.gts, iou_t);
    tp += static_cast<int>(std::count(flags.begin(), flags.end(), true));
    n_dets += static_cast<int>(kept.size());
  }
  PrfEntry e;
  e.iou = iou_t;
  e.precision = n_dets > 0 ? static_cast<double>(tp) / n_dets : 0.0;
  e.recall = n_gt > 0 ? static_cast<double>(tp) / n_gt : 0.0;
  e.f1 = (e.precision + e.recall) > 0.0
             ? 2.0 * e.precision * e.recall / (e.precision + e.recall)
             : 0.0;
  return e;
}

}  // namespace dualdet
