#include "dualdet/losses.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dualdet/error.h"

namespace dualdet {
namespace {

double ClampedScore(double raw, size_t index) {
  if (!(raw >= 0.0 && raw <= 1.0)) {
    std::ostringstream msg;
    msg << "score " << raw << " of prediction " << index
        << " is outside the probability domain";
    throw Error(ErrorCode::kNumericDomain, msg.str());
  }
  return std::clamp(raw, kScoreEps, 1.0 - kScoreEps);
}

std::vector<char> MatchedMask(size_t n, const Assignment& assignment) {
  std::vector<char> matched(n, 0);
  for (const MatchPair& p : assignment.pairs) {
    if (p.pred < 0 || static_cast<size_t>(p.pred) >= n) {
      throw Error(ErrorCode::kAssignmentMismatch,
                  "pair references prediction " + std::to_string(p.pred));
    }
    matched[p.pred] = 1;
  }
  return matched;
}

void CheckPair(const MatchPair& p, size_t n_preds, size_t n_targets) {
  if (p.pred < 0 || static_cast<size_t>(p.pred) >= n_preds || p.target < 0 ||
      static_cast<size_t>(p.target) >= n_targets) {
    std::ostringstream msg;
    msg << "pair (" << p.pred << ", " << p.target << ") out of range for "
        << n_preds << " predictions and " << n_targets << " targets";
    throw Error(ErrorCode::kAssignmentMismatch, msg.str());
  }
}

double Sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

template <typename MatchFn>
LossReport StagedLoss(const std::vector<Predictions>& stage_preds,
                      const Targets& targets, const LossConfig& cfg,
                      MatchFn match) {
  if (stage_preds.empty()) {
    throw Error(ErrorCode::kEmptyInput, "loss needs at least one stage");
  }
  LossReport report;
  for (const Predictions& preds : stage_preds) {
    const Assignment a = match(preds);
    StageLoss stage{FocalClsLoss(preds, a, cfg), L1RegLoss(preds, targets, a)};
    report.cls += stage.cls;
    report.box += stage.box;
    report.per_layer.push_back(stage);
  }
  report.total = cfg.alpha1 * report.cls + cfg.alpha2 * report.box;
  return report;
}

}  // namespace

void LossConfig::Validate() const {
  const bool ok = alpha1 >= 0.0 && alpha2 >= 0.0 && omega >= 0.0 &&
                  focal_gamma >= 0.0 && focal_alpha > 0.0 && focal_alpha < 1.0;
  if (!ok) {
    throw Error(ErrorCode::kInvalidParameter, "loss configuration out of range");
  }
}

double FocalClsLoss(const Predictions& preds, const Assignment& assignment,
                    const LossConfig& cfg) {
  if (preds.empty()) return 0.0;
  const std::vector<char> matched = MatchedMask(preds.size(), assignment);
  const double g = cfg.focal_gamma;
  double sum = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const double p = ClampedScore(preds[i].score, i);
    if (matched[i]) {
      sum += -cfg.focal_alpha * std::pow(1.0 - p, g) * std::log(p);
    } else {
      sum += -(1.0 - cfg.focal_alpha) * std::pow(p, g) * std::log(1.0 - p);
    }
  }
  return sum / static_cast<double>(preds.size());
}

double L1RegLoss(const Predictions& preds, const Targets& targets,
                 const Assignment& assignment) {
  if (assignment.pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const MatchPair& p : assignment.pairs) {
    CheckPair(p, preds.size(), targets.size());
    sum += L1BoxDistance(preds[p.pred].box, targets[p.target].box);
  }
  return sum / static_cast<double>(assignment.pairs.size());
}

Assignment MatchO2OOrEmpty(const Predictions& preds, const Targets& targets,
                           const MatchWeights& w) {
  if (targets.empty() || preds.empty()) {
    Assignment a;
    for (size_t i = 0; i < preds.size(); ++i) {
      a.unmatched_predictions.push_back(static_cast<int>(i));
    }
    return a;
  }
  return OneToOneMatch(preds, targets, w);
}

Assignment MatchO2MOrEmpty(const Predictions& preds, const Targets& targets,
                           int k, const MatchWeights& w) {
  if (k < 1) {
    throw Error(ErrorCode::kInvalidParameter,
                "replication factor must be >= 1, got " + std::to_string(k));
  }
  if (targets.empty() || preds.empty()) return MatchO2OOrEmpty(preds, {}, w);
  return OneToManyMatch(preds, targets, k, w);
}

LossReport LossO2O(const std::vector<Predictions>& stage_preds,
                   const Targets& targets, const LossConfig& cfg) {
  return StagedLoss(stage_preds, targets, cfg, [&](const Predictions& preds) {
    return MatchO2OOrEmpty(preds, targets, cfg.match_weights());
  });
}

LossReport LossO2M(const std::vector<Predictions>& stage_preds,
                   const Targets& targets, int k, const LossConfig& cfg) {
  return StagedLoss(stage_preds, targets, cfg, [&](const Predictions& preds) {
    return MatchO2MOrEmpty(preds, targets, k, cfg.match_weights());
  });
}

double CombinedLoss(double supervised, double unsupervised, double omega) {
  return supervised + omega * unsupervised;
}

std::vector<PredGradient> LossGradients(const Predictions& preds,
                                        const Targets& targets,
                                        const Assignment& assignment,
                                        const LossConfig& cfg) {
  std::vector<PredGradient> grads(preds.size());
  if (preds.empty()) return grads;
  const std::vector<char> matched = MatchedMask(preds.size(), assignment);
  const double n = static_cast<double>(preds.size());
  const double g = cfg.focal_gamma;
  const double a = cfg.focal_alpha;

  for (size_t i = 0; i < preds.size(); ++i) {
    const double raw = preds[i].score;
    const double p = ClampedScore(raw, i);
    if (raw < kScoreEps || raw > 1.0 - kScoreEps) continue;  // saturated
    double d;
    if (matched[i]) {
      // d/dp of -a (1-p)^g ln p
      d = -a * (-g * std::pow(1.0 - p, g - 1.0) * std::log(p) +
                std::pow(1.0 - p, g) / p);
    } else {
      // d/dp of -(1-a) p^g ln(1-p)
      d = -(1.0 - a) * (g * std::pow(p, g - 1.0) * std::log(1.0 - p) -
                        std::pow(p, g) / (1.0 - p));
    }
    grads[i].d_score = cfg.alpha1 * d / n;
  }

  if (!assignment.pairs.empty()) {
    const double scale =
        cfg.alpha2 / static_cast<double>(assignment.pairs.size());
    for (const MatchPair& pair : assignment.pairs) {
      CheckPair(pair, preds.size(), targets.size());
      const auto pb = preds[pair.pred].box.AsArray();
      const auto tb = targets[pair.target].box.AsArray();
      for (int c = 0; c < 4; ++c) {
        grads[pair.pred].d_box[c] += scale * Sign(pb[c] - tb[c]);
      }
    }
  }
  return grads;
}

}  // namespace dualdet
