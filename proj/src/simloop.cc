#include "dualdet/simloop.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dualdet/error.h"
#include "dualdet/pseudo.h"
#include "dualdet/rng.h"

namespace dualdet {
namespace {

struct Objective {
  double loss = 0.0;
  DetectorParams grad = DetectorParams::Zeros();
};

// Weighted o2o + o2m objective of one view and its gradient.
Objective SceneObjective(const DetectorParams& params, const Raster& raster,
                         const Targets& targets, const TrainConfig& cfg,
                         double o2o_weight, double o2m_weight) {
  Objective obj;
  auto branch = [&](Head head, double weight) {
    const GridSpec& grid = cfg.detector.grid(head);
    if (weight == 0.0 || !grid.enabled()) return;
    const FeatureMap features = ExtractFeatures(raster, grid);
    const Predictions preds = Predict(params, features, cfg.detector, head);
    for (int s = 0; s < cfg.stages; ++s) {
      const Assignment a =
          head == Head::kO2O
              ? MatchO2OOrEmpty(preds, targets, cfg.loss.match_weights())
              : MatchO2MOrEmpty(preds, targets, cfg.k, cfg.loss.match_weights());
      const double stage = cfg.loss.alpha1 * FocalClsLoss(preds, a, cfg.loss) +
                           cfg.loss.alpha2 * L1RegLoss(preds, targets, a);
      obj.loss += weight * stage;
      const auto per_pred = LossGradients(preds, targets, a, cfg.loss);
      Accumulate(obj.grad,
                 ParamGradients(params, features, cfg.detector, head, per_pred),
                 weight);
    }
  };
  branch(Head::kO2O, o2o_weight);
  branch(Head::kO2M, o2m_weight);
  return obj;
}

Predictions InferInternal(const DetectorParams& params, const Raster& raster,
                          const TrainConfig& cfg, bool allow_nms) {
  Predictions preds = Predict(params, raster, cfg.detector, cfg.inference_head);
  if (allow_nms && cfg.inference_nms) preds = Nms(preds, cfg.nms_iou);
  return preds;
}

void CheckFinite(double loss, const DetectorParams& params, int64_t it) {
  if (!std::isfinite(loss) || !AllFinite(params)) {
    std::ostringstream msg;
    msg << "non-finite loss or parameters at iteration " << it
        << " (loss=" << loss << ")";
    throw Error(ErrorCode::kDivergence, msg.str());
  }
}

std::vector<size_t> EpochOrder(size_t n, uint64_t seed, int epoch) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(DeriveSeed(seed, HashString("epoch-order"), static_cast<uint64_t>(epoch)));
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.NextU64() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainResult Train(const Dataset& labeled, const Dataset* unlabeled,
                  const TrainConfig& cfg, const Dataset* holdout,
                  const StepObserver& observer) {
  cfg.Validate();
  if (labeled.empty()) {
    throw Error(ErrorCode::kEmptyInput, "training needs at least one labeled scene");
  }
  const bool semi = unlabeled != nullptr && !unlabeled->empty();

  TrainResult result;
  result.student = DetectorParams::Zeros();
  result.teacher = result.student;
  result.burn_in_student = result.student;
  bool teacher_active = semi && cfg.burn_in_epochs == 0;

  int64_t it = 0;
  uint64_t unlabeled_cursor = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double o2m_w = cfg.O2MWeightAt(epoch);
    const double lr = cfg.LrAt(epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    int unlabeled_steps = 0;
    int kept_total = 0;
    int generated_total = 0;

    for (size_t idx : EpochOrder(labeled.size(), cfg.seed, epoch)) {
      Rng weak_rng(DeriveSeed(cfg.seed, HashString("labeled-weak"), static_cast<uint64_t>(it)));
      const Scene view = WeakAugment(labeled[idx], weak_rng, cfg.augment).first;
      Objective total = SceneObjective(result.student, view.raster, view.gt_boxes,
                                       cfg, cfg.o2o_weight, o2m_w);
      rec.sup_loss += total.loss;

      int kept = 0;
      if (teacher_active) {
        const Scene& u = (*unlabeled)[unlabeled_cursor++ % unlabeled->size()];
        Rng w_rng(DeriveSeed(cfg.seed, HashString("unlabeled-weak"), static_cast<uint64_t>(it)));
        Rng s_rng(DeriveSeed(cfg.seed, HashString("unlabeled-strong"), static_cast<uint64_t>(it)));
        const auto [weak, weak_rec] = WeakAugment(u, w_rng, cfg.augment);
        const Predictions teacher_preds =
            InferInternal(result.teacher, weak.raster, cfg, /*allow_nms=*/true);
        const PseudoLabelSet pseudo = FilterPseudoLabels(teacher_preds, {cfg.tau});
        const auto [strong, strong_rec] = StrongAugment(u, s_rng, cfg.augment);
        const Targets mapped = MapBoxes(pseudo.boxes, weak_rec, strong_rec, cfg.augment);
        kept = static_cast<int>(pseudo.boxes.size());
        kept_total += kept;
        generated_total += static_cast<int>(teacher_preds.size());
        ++unlabeled_steps;
        result.pseudo_labels += kept;
        ++result.unlabeled_steps;

        // No pseudo-labels: the unsupervised term is 0 for this step.
        if (!mapped.empty()) {
          const Objective unsup = SceneObjective(result.student, strong.raster,
                                                 mapped, cfg, cfg.o2o_weight, o2m_w);
          rec.unsup_loss += unsup.loss;
          total.loss = CombinedLoss(total.loss, unsup.loss, cfg.loss.omega);
          Accumulate(total.grad, unsup.grad, cfg.loss.omega);
        }
      }

      ScaleBoxGradients(total.grad, cfg.box_lr_scale);
      result.student = SgdStep(result.student, total.grad, lr);
      CheckFinite(total.loss, result.student, it);

      if (teacher_active) {
        const DetectorParams before = result.teacher;
        result.teacher = EmaUpdate(result.teacher, result.student, cfg.ema_momentum);
        if (observer) {
          observer({it, epoch, true, kept, &before, &result.teacher, &result.student});
        }
      } else if (observer) {
        observer({it, epoch, false, 0, &result.teacher, &result.teacher, &result.student});
      }
      ++it;
    }

    const double steps = static_cast<double>(labeled.size());
    rec.sup_loss /= steps;
    rec.unsup_loss /= steps;
    if (unlabeled_steps > 0) {
      rec.pseudo_per_iter = static_cast<double>(kept_total) / unlabeled_steps;
      rec.kept_ratio = generated_total > 0
                           ? static_cast<double>(kept_total) / generated_total
                           : 0.0;
    }

    if (epoch + 1 == cfg.burn_in_epochs) {
      result.burn_in_student = result.student;
      if (semi) {
        result.teacher = result.student;
        teacher_active = true;
      }
    }

    if (holdout != nullptr && !holdout->empty()) {
      const EvalSummary s = EvaluateParams(result.student, *holdout, cfg);
      rec.eval_map = s.metrics.map;
      rec.duplicate_rate = s.duplicate_rate;
    }
    result.history.epochs.push_back(rec);
  }
  if (!semi) result.teacher = result.student;
  return result;
}

double FinalMap(const TrainResult& r, const Dataset& holdout, const TrainConfig& cfg) {
  return EvaluateParams(r.student, holdout, cfg).metrics.map;
}

}  // namespace

void TrainConfig::Validate() const {
  std::string problem;
  if (epochs < 1) problem = "epochs must be >= 1";
  else if (burn_in_epochs < 0 || burn_in_epochs > epochs) problem = "burn-in must lie in [0, epochs]";
  else if (!(lr >= 0.0)) problem = "learning rate must be >= 0";
  else if (!(box_lr_scale >= 0.0)) problem = "box learning-rate scale must be >= 0";
  else if (!(lr_drop_at >= 0.0 && lr_drop_at <= 1.0)) problem = "lr drop point must lie in [0, 1]";
  else if (!(lr_drop_factor >= 0.0)) problem = "lr drop factor must be >= 0";
  else if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) problem = "EMA momentum must lie in [0, 1)";
  else if (!(tau >= 0.0 && tau <= 1.0)) problem = "tau must lie in [0, 1]";
  else if (k < 1) problem = "K must be >= 1";
  else if (stages < 1) problem = "stages must be >= 1";
  else if (!(o2o_weight >= 0.0 && o2m_weight >= 0.0)) problem = "branch weights must be >= 0";
  else if (!(o2m_phase >= 0.0 && o2m_phase <= 1.0)) problem = "o2m phase must lie in [0, 1]";
  else if (!detector.o2o_grid.enabled()) problem = "the one-to-one grid must be non-empty";
  else if (!(nms_iou > 0.0 && nms_iou < 1.0)) problem = "NMS IoU must lie in (0, 1)";
  if (!problem.empty()) throw Error(ErrorCode::kInvalidParameter, problem);
  loss.Validate();
}

double TrainConfig::O2MWeightAt(int epoch) const {
  if (!detector.o2m_grid.enabled()) return 0.0;
  if (epoch < burn_in_epochs) return o2m_weight;
  const int post_total = epochs - burn_in_epochs;
  const int cutoff = static_cast<int>(std::ceil(o2m_phase * post_total - 1e-9));
  return (epoch - burn_in_epochs) < cutoff ? o2m_weight : 0.0;
}

double TrainConfig::LrAt(int epoch) const {
  const int drop = static_cast<int>(std::ceil(lr_drop_at * epochs - 1e-9));
  return epoch < drop ? lr : lr * lr_drop_factor;
}

nlohmann::json TrainConfig::ToJson() const {
  return {{"epochs", epochs},
          {"burn_in_epochs", burn_in_epochs},
          {"lr", lr},
          {"box_lr_scale", box_lr_scale},
          {"lr_drop_at", lr_drop_at},
          {"lr_drop_factor", lr_drop_factor},
          {"ema_momentum", ema_momentum},
          {"tau", tau},
          {"omega", loss.omega},
          {"k", k},
          {"n_queries", detector.o2o_grid.size()},
          {"t_queries", detector.o2m_grid.size()},
          {"o2o_grid", {detector.o2o_grid.cols, detector.o2o_grid.rows}},
          {"o2m_grid", {detector.o2m_grid.cols, detector.o2m_grid.rows}},
          {"stages", stages},
          {"o2o_weight", o2o_weight},
          {"o2m_weight", o2m_weight},
          {"o2m_phase", o2m_phase},
          {"alpha1", loss.alpha1},
          {"alpha2", loss.alpha2},
          {"focal_gamma", loss.focal_gamma},
          {"focal_alpha", loss.focal_alpha},
          {"inference_head", HeadName(inference_head)},
          {"inference_nms", inference_nms},
          {"nms_iou", nms_iou},
          {"seed", seed}};
}

const char* StrategyName(Strategy s) {
  switch (s) {
    case Strategy::kO2OOnly: return "o2o";
    case Strategy::kO2MOnly: return "o2m+nms";
    case Strategy::kDual: return "dual";
  }
  return "unknown";
}

TrainConfig WithStrategy(TrainConfig cfg, Strategy s) {
  switch (s) {
    case Strategy::kO2OOnly:
      cfg.o2o_weight = 1.0;
      cfg.o2m_weight = 0.0;
      cfg.inference_head = Head::kO2O;
      cfg.inference_nms = false;
      break;
    case Strategy::kO2MOnly:
      cfg.o2o_weight = 0.0;
      cfg.o2m_weight = 1.0;
      cfg.o2m_phase = 1.0;
      cfg.inference_head = Head::kO2M;
      cfg.inference_nms = true;
      break;
    case Strategy::kDual:
      cfg.o2o_weight = 1.0;
      cfg.o2m_weight = std::max(cfg.o2m_weight, 1.0);
      cfg.inference_head = Head::kO2O;
      cfg.inference_nms = false;
      break;
  }
  return cfg;
}

TrainResult TrainSupervised(const Dataset& labeled, const TrainConfig& cfg,
                            const Dataset* holdout, const StepObserver& observer) {
  return Train(labeled, nullptr, cfg, holdout, observer);
}

TrainResult TrainSemiSupervised(const Dataset& labeled, const Dataset& unlabeled,
                                const TrainConfig& cfg, const Dataset* holdout,
                                const StepObserver& observer) {
  return Train(labeled, &unlabeled, cfg, holdout, observer);
}

Predictions Infer(const DetectorParams& params, const Raster& raster,
                  const TrainConfig& cfg) {
  return InferInternal(params, raster, cfg, /*allow_nms=*/true);
}

EvalSummary EvaluateParams(const DetectorParams& params, const Dataset& scenes,
                           const TrainConfig& cfg) {
  const uint64_t nms_before = NmsCallCount();
  EvalSummary summary;
  std::vector<EvalImage> images;
  images.reserve(scenes.size());
  size_t gt_total = 0;
  double dup_weighted = 0.0;
  for (size_t i = 0; i < scenes.size(); ++i) {
    const Scene& s = scenes[i];
    Predictions raw = Predict(params, s.raster, cfg.detector, cfg.inference_head);
    dup_weighted += DuplicateRate(raw, s.gt_boxes, cfg.duplicate_score, cfg.duplicate_iou) *
                    static_cast<double>(s.gt_boxes.size());
    gt_total += s.gt_boxes.size();
    if (cfg.inference_nms) raw = Nms(raw, cfg.nms_iou);
    images.push_back({static_cast<int64_t>(i), std::move(raw), s.gt_boxes});
  }
  summary.duplicate_rate = gt_total > 0 ? dup_weighted / static_cast<double>(gt_total) : 0.0;
  summary.metrics = MapCoco(images, cfg.eval);
  summary.nms_calls = NmsCallCount() - nms_before;
  return summary;
}

std::vector<ThresholdRow> SweepThreshold(const Dataset& labeled,
                                         const Dataset& unlabeled,
                                         const Dataset& holdout,
                                         const TrainConfig& cfg,
                                         const std::vector<double>& taus) {
  if (taus.empty()) throw Error(ErrorCode::kEmptyInput, "threshold sweep needs taus");
  std::vector<ThresholdRow> rows;
  for (double tau : taus) {
    TrainConfig c = cfg;
    c.tau = tau;
    const TrainResult r = TrainSemiSupervised(labeled, unlabeled, c);
    rows.push_back({tau, FinalMap(r, holdout, c), r.mean_pseudo_per_step()});
  }
  return rows;
}

std::vector<QueryGrids> DefaultQueryGrids() {
  return {{GridSpec{6, 5}, GridSpec{0, 0}},
          {GridSpec{6, 5}, GridSpec{20, 10}},
          {GridSpec{6, 5}, GridSpec{20, 20}},
          {GridSpec{6, 5}, GridSpec{30, 20}}};
}

std::vector<QueryRow> SweepQueries(const Dataset& labeled,
                                   const Dataset& unlabeled,
                                   const Dataset& holdout,
                                   const TrainConfig& cfg,
                                   const std::vector<QueryGrids>& grids) {
  if (grids.empty()) throw Error(ErrorCode::kEmptyInput, "query sweep needs grids");
  std::vector<QueryRow> rows;
  for (const QueryGrids& g : grids) {
    TrainConfig c = cfg;
    c.detector.o2o_grid.cols = g.o2o.cols;
    c.detector.o2o_grid.rows = g.o2o.rows;
    c.detector.o2m_grid.cols = g.o2m.cols;
    c.detector.o2m_grid.rows = g.o2m.rows;
    const TrainResult r = TrainSemiSupervised(labeled, unlabeled, c);
    rows.push_back({g.o2o.size(), g.o2m.enabled() ? g.o2m.size() : 0,
                    FinalMap(r, holdout, c)});
  }
  return rows;
}

std::vector<StrategyRow> AblateStrategies(const Dataset& labeled,
                                          const Dataset& unlabeled,
                                          const Dataset& holdout,
                                          const TrainConfig& cfg) {
  std::vector<StrategyRow> rows;
  for (Strategy s : {Strategy::kO2OOnly, Strategy::kO2MOnly, Strategy::kDual}) {
    const TrainConfig c = WithStrategy(cfg, s);
    const auto start = std::chrono::steady_clock::now();
    const uint64_t nms_before = NmsCallCount();
    const TrainResult r = TrainSemiSupervised(labeled, unlabeled, c);
    const EvalSummary e = EvaluateParams(r.student, holdout, c);
    StrategyRow row;
    row.strategy = s;
    row.map = e.metrics.map;
    row.duplicate_rate = e.duplicate_rate;
    row.nms_calls = NmsCallCount() - nms_before;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(row);
  }
  return rows;
}

Benchmark MakeBenchmark(uint64_t seed, int n_train, int n_holdout,
                        double labeled_fraction, const LayoutConfig& layout) {
  Benchmark b;
  const Dataset pool = GenerateDataset(n_train, seed, layout, "train");
  b.split = SplitDataset(pool, {labeled_fraction, seed});
  b.holdout = GenerateDataset(n_holdout, DeriveSeed(seed, HashString("holdout")),
                              layout, "holdout");
  return b;
}

}  // namespace dualdet
