#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dualdet/data.h"
#include "dualdet/detector.h"
#include "dualdet/error.h"
#include "dualdet/eval.h"
#include "dualdet/report.h"
#include "dualdet/simloop.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dualdet {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

// Config-file keys are the long flag names with '-' replaced by '_'.
struct Binding {
  CLI::Option* option = nullptr;
  std::function<void(const json&)> assign;
};
using Registry = std::map<std::string, Binding>;

std::string FlagName(const std::string& key) {
  std::string out = key;
  for (char& c : out) {
    if (c == '_') c = '-';
  }
  return "--" + out;
}

template <typename T>
CLI::Option* Bind(CLI::App* app, Registry& reg, const std::string& key, T& var,
                  const std::string& help) {
  CLI::Option* opt = app->add_option(FlagName(key), var, help)->capture_default_str();
  reg[key] = {opt, [&var, key](const json& j) {
                try {
                  var = j.get<T>();
                } catch (const json::exception&) {
                  throw Error(ErrorCode::kValidation, "config key '" + key + "' has the wrong type");
                }
              }};
  return opt;
}

CLI::Option* BindFlag(CLI::App* app, Registry& reg, const std::string& key, bool& var,
                      const std::string& help) {
  CLI::Option* opt = app->add_flag(FlagName(key), var, help);
  reg[key] = {opt, [&var, key](const json& j) {
                if (!j.is_boolean()) {
                  throw Error(ErrorCode::kValidation, "config key '" + key + "' must be a boolean");
                }
                var = j.get<bool>();
              }};
  return opt;
}

struct Common {
  uint64_t seed = 0;
  std::string config;
  std::string out_dir = ".";
  bool verbose = false;
};

void AddCommon(CLI::App* app, Registry& reg, Common& c) {
  Bind(app, reg, "seed", c.seed, "Random seed");
  app->add_option("--config", c.config, "JSON file with any subset of the flags");
  Bind(app, reg, "out_dir", c.out_dir, "Directory for output files");
  BindFlag(app, reg, "verbose", c.verbose, "Print progress to stderr");
}

// Values from the config file fill every flag not given on the command line.
void ApplyConfigFile(const std::string& path, const Registry& reg) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, "config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kParse, "config " + path + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto it = reg.find(key);
    if (it == reg.end()) throw Error(ErrorCode::kValidation, "unknown config key '" + key + "'");
    if (it->second.option->count() == 0) it->second.assign(value);
  }
}

GridSpec ParseGrid(const std::string& text) {
  const size_t x = text.find('x');
  GridSpec g;
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    size_t used = 0;
    g.cols = std::stoi(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    const std::string rows = text.substr(x + 1);
    g.rows = std::stoi(rows, &used);
    if (used != rows.size()) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kValidation, "grid must look like COLSxROWS, got '" + text + "'");
  }
  if (g.cols < 0 || g.rows < 0) throw Error(ErrorCode::kValidation, "grid sizes must be >= 0");
  return g;
}

std::string OutPath(const Common& c, const std::string& name) {
  return (fs::path(c.out_dir) / name).string();
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "cannot create output directory " + dir);
  }
}

Dataset RequireDataset(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::kValidation, std::string(what) + " path is required");
  if (!fs::exists(path)) throw Error(ErrorCode::kIo, std::string(what) + " not found: " + path);
  return LoadDataset(path);
}

// ---- gen ----

struct GenOptions {
  Common common;
  int count = 200;
  std::string out;
  int width = 64;
  int height = 64;
  int min_tables = 1;
  int max_tables = 3;
  double noise_sigma = 0.03;
};

int RunGen(const GenOptions& o) {
  if (o.count < 1) throw Error(ErrorCode::kValidation, "--count must be >= 1");
  LayoutConfig layout;
  layout.width = o.width;
  layout.height = o.height;
  layout.min_tables = o.min_tables;
  layout.max_tables = o.max_tables;
  layout.noise_sigma = o.noise_sigma;
  layout.Validate();

  const std::string path = o.out.empty() ? OutPath(o.common, "scenes.jsonl") : o.out;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) EnsureDir(parent.string());

  const Dataset ds = GenerateDataset(o.count, o.common.seed, layout);
  SaveDataset(path, ds, {{"seed", o.common.seed}, {"count", o.count}, {"layout", layout.ToJson()}});
  size_t boxes = 0;
  for (const Scene& s : ds) boxes += s.gt_boxes.size();
  std::cout << "scenes " << ds.size() << " boxes " << boxes << " -> " << path << "\n";
  return kExitOk;
}

// ---- shared training flags ----

struct TrainFlags {
  double labeled_fraction = 0.1;
  int epochs = 60;
  int burn_in = 10;
  double lr = 1.0;
  double box_lr_scale = 0.001;
  double ema_momentum = 0.99;
  double tau = 0.7;
  double omega = 1.0;
  int k = 6;
  int stages = 1;
  double o2o_weight = 1.0;
  double o2m_weight = 1.0;
  double o2m_phase = 0.7;
  std::string o2o_grid = "6x5";
  std::string o2m_grid = "20x20";
  std::string holdout;
};

void AddTrainFlags(CLI::App* app, Registry& reg, TrainFlags& t) {
  Bind(app, reg, "labeled_fraction", t.labeled_fraction, "Fraction of scenes kept labeled, in (0, 1]");
  Bind(app, reg, "epochs", t.epochs, "Passes over the labeled set");
  Bind(app, reg, "burn_in", t.burn_in, "Supervised-only epochs before the teacher starts");
  Bind(app, reg, "lr", t.lr, "Learning rate");
  Bind(app, reg, "box_lr_scale", t.box_lr_scale, "Learning-rate multiplier for box parameters");
  Bind(app, reg, "ema_momentum", t.ema_momentum, "Teacher EMA momentum");
  Bind(app, reg, "tau", t.tau, "Pseudo-label score threshold");
  Bind(app, reg, "omega", t.omega, "Weight of the unsupervised loss");
  Bind(app, reg, "k", t.k, "Ground-truth replication factor for one-to-many matching");
  Bind(app, reg, "stages", t.stages, "Decoder stages supervised by the loss");
  Bind(app, reg, "o2o_weight", t.o2o_weight, "Weight of the one-to-one branch");
  Bind(app, reg, "o2m_weight", t.o2m_weight, "Weight of the one-to-many branch");
  Bind(app, reg, "o2m_phase", t.o2m_phase, "Fraction of post-burn-in epochs using the one-to-many branch");
  Bind(app, reg, "o2o_grid", t.o2o_grid, "One-to-one query grid, COLSxROWS");
  Bind(app, reg, "o2m_grid", t.o2m_grid, "One-to-many query grid, COLSxROWS (0x0 disables)");
  Bind(app, reg, "holdout", t.holdout, "Held-out dataset for evaluation");
}

TrainConfig MakeTrainConfig(const TrainFlags& t, uint64_t seed) {
  if (!(t.labeled_fraction > 0.0 && t.labeled_fraction <= 1.0)) {
    throw Error(ErrorCode::kValidation, "--labeled-fraction must lie in (0, 1]");
  }
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = t.epochs;
  cfg.burn_in_epochs = t.burn_in;
  cfg.lr = t.lr;
  cfg.box_lr_scale = t.box_lr_scale;
  cfg.ema_momentum = t.ema_momentum;
  cfg.tau = t.tau;
  cfg.loss.omega = t.omega;
  cfg.k = t.k;
  cfg.stages = t.stages;
  cfg.o2o_weight = t.o2o_weight;
  cfg.o2m_weight = t.o2m_weight;
  cfg.o2m_phase = t.o2m_phase;
  cfg.detector.o2o_grid = ParseGrid(t.o2o_grid);
  cfg.detector.o2m_grid = ParseGrid(t.o2m_grid);
  cfg.Validate();
  return cfg;
}

// Unlabeled scenes with their ground truth restored, for evaluation when no
// held-out file is given.
Dataset RestoreHidden(const DatasetSplit& split) {
  Dataset out = split.unlabeled;
  for (size_t i = 0; i < out.size(); ++i) out[i].gt_boxes = split.hidden_gt[i];
  return out;
}

json RunEcho(const TrainConfig& cfg, const TrainFlags& t) {
  json echo = cfg.ToJson();
  echo["labeled_fraction"] = t.labeled_fraction;
  return echo;
}

// ---- train ----

struct TrainOptions {
  Common common;
  TrainFlags train;
  std::string data;
  std::string mode = "semi";
};

int RunTrain(const TrainOptions& o) {
  if (o.mode != "sup" && o.mode != "semi") {
    throw Error(ErrorCode::kValidation, "--mode must be sup or semi");
  }
  const TrainConfig cfg = MakeTrainConfig(o.train, o.common.seed);
  const Dataset data = RequireDataset(o.data, "dataset");
  Dataset holdout;
  if (!o.train.holdout.empty()) holdout = RequireDataset(o.train.holdout, "holdout");
  EnsureDir(o.common.out_dir);

  const DatasetSplit split = SplitDataset(data, {o.train.labeled_fraction, o.common.seed});
  const Dataset* eval_set = holdout.empty() ? nullptr : &holdout;
  const bool semi = o.mode == "semi" && !split.unlabeled.empty();
  const TrainResult r = semi ? TrainSemiSupervised(split.labeled, split.unlabeled, cfg, eval_set)
                             : TrainSupervised(split.labeled, cfg, eval_set);

  json echo = RunEcho(cfg, o.train);
  echo["mode"] = o.mode;
  echo["labeled"] = split.labeled.size();
  echo["unlabeled"] = split.unlabeled.size();

  WriteTextFile(OutPath(o.common, "history.csv"), HistoryToCsv(r.history, echo));
  WriteTextFile(OutPath(o.common, "history.json"), HistoryToJson(r.history, echo).dump(2) + "\n");
  SaveCheckpoint(OutPath(o.common, "checkpoint_burnin.json"), r.burn_in_student, echo);
  SaveCheckpoint(OutPath(o.common, "checkpoint_final.json"), r.student, echo);
  if (semi) SaveCheckpoint(OutPath(o.common, "checkpoint_teacher.json"), r.teacher, echo);

  if (o.common.verbose) {
    for (const EpochRecord& e : r.history.epochs) {
      std::cerr << "epoch " << e.epoch << " sup " << FormatNumber(e.sup_loss) << " unsup "
                << FormatNumber(e.unsup_loss) << " pseudo/iter " << FormatNumber(e.pseudo_per_iter);
      if (e.eval_map) std::cerr << " map " << FormatNumber(*e.eval_map);
      std::cerr << "\n";
    }
  }
  std::cout << "mode " << o.mode << " labeled " << split.labeled.size() << " unlabeled "
            << split.unlabeled.size() << " pseudo/step " << FormatNumber(r.mean_pseudo_per_step());
  if (!r.history.epochs.empty() && r.history.epochs.back().eval_map) {
    std::cout << " final map " << FormatNumber(*r.history.epochs.back().eval_map);
  }
  std::cout << "\n";
  return kExitOk;
}

// ---- eval ----

struct EvalFlags {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string annotations;
  std::string results;
  int64_t category_id = 1;
  double large_area = 0.04;
  double score_threshold = 0.5;
  bool nms = false;
};

void WriteMetrics(const Common& c, const MetricsOutput& m, const json& echo) {
  EnsureDir(c.out_dir);
  WriteTextFile(OutPath(c, "metrics.json"), MetricsToJson(m, echo).dump(2) + "\n");
  WriteTextFile(OutPath(c, "metrics.csv"), MetricsToCsv(m, echo));
  auto show = [](const std::optional<double>& v) { return v ? FormatNumber(*v) : std::string("n/a"); };
  std::cout << "map " << show(m.map) << " ap50 " << show(m.ap50) << " ap75 " << show(m.ap75)
            << " ar_large " << show(m.ar_large) << "\n";
}

EvalOptions MakeEvalOptions(const EvalFlags& o) {
  EvalOptions opts;
  opts.large_area = o.large_area;
  opts.prf_score_threshold = o.score_threshold;
  return opts;
}

int RunEvalCoco(const EvalFlags& o) {
  const CocoAnnotations ann = LoadCocoAnnotations(o.annotations, o.category_id);
  const std::vector<ImagePrediction> preds = LoadPredictions(o.results, ann, o.category_id);
  std::vector<EvalImage> images;
  std::map<int64_t, size_t> index;
  for (const CocoImage& img : ann.images) {
    index[img.id] = images.size();
    images.push_back({img.id, {}, img.gts});
  }
  for (const ImagePrediction& p : preds) images[index.at(p.image_id)].preds.push_back(p.pred);

  const EvalOptions opts = MakeEvalOptions(o);
  const MetricsReport report = MapCoco(images, opts);
  json echo = {{"annotations", o.annotations},
               {"results", o.results},
               {"category_id", o.category_id},
               {"large_area", opts.large_area},
               {"score_threshold", opts.prf_score_threshold},
               {"skipped_annotations", ann.skipped_annotations}};
  WriteMetrics(o.common, ToMetricsOutput(report, !preds.empty()), echo);
  return kExitOk;
}

int RunEval(const EvalFlags& o) {
  const bool coco = !o.annotations.empty() || !o.results.empty();
  const bool ckpt = !o.checkpoint.empty() || !o.data.empty();
  if (coco == ckpt) {
    throw Error(ErrorCode::kValidation,
                "give either --checkpoint with --data, or --annotations with --results");
  }
  if (coco) {
    if (o.annotations.empty() || o.results.empty()) {
      throw Error(ErrorCode::kValidation, "--annotations and --results go together");
    }
    return RunEvalCoco(o);
  }
  if (o.checkpoint.empty()) throw Error(ErrorCode::kValidation, "--checkpoint is required");
  if (!fs::exists(o.checkpoint)) throw Error(ErrorCode::kIo, "checkpoint not found: " + o.checkpoint);
  const Dataset data = RequireDataset(o.data, "dataset");
  json ckpt_echo;
  const DetectorParams params = LoadCheckpoint(o.checkpoint, &ckpt_echo);

  TrainConfig cfg;
  if (ckpt_echo.is_object()) {
    if (ckpt_echo.contains("o2o_grid")) {
      const auto g = ckpt_echo["o2o_grid"].get<std::vector<int>>();
      cfg.detector.o2o_grid = {g.at(0), g.at(1)};
    }
    if (ckpt_echo.contains("o2m_grid")) {
      const auto g = ckpt_echo["o2m_grid"].get<std::vector<int>>();
      cfg.detector.o2m_grid = {g.at(0), g.at(1)};
    }
  }
  cfg.inference_nms = o.nms;
  cfg.eval = MakeEvalOptions(o);
  const EvalSummary s = EvaluateParams(params, data, cfg);
  json echo = {{"checkpoint", o.checkpoint},
               {"data", o.data},
               {"inference_nms", o.nms},
               {"large_area", cfg.eval.large_area},
               {"score_threshold", cfg.eval.prf_score_threshold},
               {"duplicate_rate", s.duplicate_rate}};
  WriteMetrics(o.common, ToMetricsOutput(s.metrics, true), echo);
  return kExitOk;
}

// ---- sweep ----

struct SweepOptions {
  Common common;
  TrainFlags train;
  std::string data;
  std::string kind;
  std::vector<double> taus = {0.5, 0.6, 0.7, 0.8};
};

int RunSweep(const SweepOptions& o) {
  if (o.kind != "tau" && o.kind != "queries" && o.kind != "strategy") {
    throw Error(ErrorCode::kValidation, "--kind must be tau, queries or strategy");
  }
  if (o.kind == "tau" && o.taus.empty()) throw Error(ErrorCode::kValidation, "--taus is empty");
  const TrainConfig cfg = MakeTrainConfig(o.train, o.common.seed);
  const Dataset data = RequireDataset(o.data, "dataset");
  const DatasetSplit split = SplitDataset(data, {o.train.labeled_fraction, o.common.seed});
  if (split.unlabeled.empty()) {
    throw Error(ErrorCode::kValidation, "sweeps need unlabeled scenes; lower --labeled-fraction");
  }
  const Dataset eval_set =
      o.train.holdout.empty() ? RestoreHidden(split) : RequireDataset(o.train.holdout, "holdout");
  EnsureDir(o.common.out_dir);

  json echo = RunEcho(cfg, o.train);
  echo["kind"] = o.kind;
  echo["eval_set"] = o.train.holdout.empty() ? "unlabeled" : o.train.holdout;

  std::string name;
  std::string csv;
  if (o.kind == "tau") {
    name = "sweep_tau.csv";
    csv = ThresholdSweepToCsv(SweepThreshold(split.labeled, split.unlabeled, eval_set, cfg, o.taus), echo);
  } else if (o.kind == "queries") {
    name = "sweep_queries.csv";
    csv = QuerySweepToCsv(
        SweepQueries(split.labeled, split.unlabeled, eval_set, cfg, DefaultQueryGrids()), echo);
  } else {
    name = "sweep_strategy.csv";
    const auto rows = AblateStrategies(split.labeled, split.unlabeled, eval_set, cfg);
    csv = StrategyTableToCsv(rows, echo);
    if (o.common.verbose) {
      for (const StrategyRow& r : rows) {
        std::cerr << StrategyName(r.strategy) << " wall " << FormatNumber(r.wall_seconds) << "s\n";
      }
    }
  }
  const std::string path = OutPath(o.common, name);
  WriteTextFile(path, csv);
  std::cout << "wrote " << path << "\n";
  return kExitOk;
}

int ExitCodeFor(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kDivergence:
    case ErrorCode::kNumericDomain:
      return kExitNumeric;
    default:
      return kExitUsage;
  }
}

int Main(int argc, char** argv) {
  CLI::App app{"Semi-supervised table detection on synthetic document scenes"};
  app.require_subcommand(1);

  Registry gen_reg, train_reg, eval_reg, sweep_reg;

  GenOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a synthetic scene dataset");
  AddCommon(gen_cmd, gen_reg, gen.common);
  Bind(gen_cmd, gen_reg, "count", gen.count, "Number of scenes");
  Bind(gen_cmd, gen_reg, "out", gen.out, "Output file (default <out-dir>/scenes.jsonl)");
  Bind(gen_cmd, gen_reg, "width", gen.width, "Raster width in pixels");
  Bind(gen_cmd, gen_reg, "height", gen.height, "Raster height in pixels");
  Bind(gen_cmd, gen_reg, "min_tables", gen.min_tables, "Minimum tables per scene");
  Bind(gen_cmd, gen_reg, "max_tables", gen.max_tables, "Maximum tables per scene");
  Bind(gen_cmd, gen_reg, "noise_sigma", gen.noise_sigma, "Pixel noise standard deviation");

  TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a detector");
  AddCommon(train_cmd, train_reg, train.common);
  AddTrainFlags(train_cmd, train_reg, train.train);
  Bind(train_cmd, train_reg, "data", train.data, "Dataset file");
  Bind(train_cmd, train_reg, "mode", train.mode, "sup or semi");

  EvalFlags ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Compute detection metrics");
  AddCommon(eval_cmd, eval_reg, ev.common);
  Bind(eval_cmd, eval_reg, "checkpoint", ev.checkpoint, "Detector checkpoint");
  Bind(eval_cmd, eval_reg, "data", ev.data, "Dataset file with ground truth");
  Bind(eval_cmd, eval_reg, "annotations", ev.annotations, "COCO annotation file");
  Bind(eval_cmd, eval_reg, "results", ev.results, "COCO results file");
  Bind(eval_cmd, eval_reg, "category_id", ev.category_id, "Table category id in COCO files");
  Bind(eval_cmd, eval_reg, "large_area", ev.large_area, "Area fraction above which a table is large");
  Bind(eval_cmd, eval_reg, "score_threshold", ev.score_threshold, "Score cut for P/R/F1");
  BindFlag(eval_cmd, eval_reg, "nms", ev.nms, "Apply NMS to checkpoint predictions");

  SweepOptions sweep;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run an ablation sweep");
  AddCommon(sweep_cmd, sweep_reg, sweep.common);
  AddTrainFlags(sweep_cmd, sweep_reg, sweep.train);
  Bind(sweep_cmd, sweep_reg, "data", sweep.data, "Dataset file");
  Bind(sweep_cmd, sweep_reg, "kind", sweep.kind, "tau, queries or strategy");
  Bind(sweep_cmd, sweep_reg, "taus", sweep.taus, "Thresholds for --kind tau")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) {
      ApplyConfigFile(gen.common.config, gen_reg);
      return RunGen(gen);
    }
    if (train_cmd->parsed()) {
      ApplyConfigFile(train.common.config, train_reg);
      return RunTrain(train);
    }
    if (eval_cmd->parsed()) {
      ApplyConfigFile(ev.common.config, eval_reg);
      return RunEval(ev);
    }
    ApplyConfigFile(sweep.common.config, sweep_reg);
    return RunSweep(sweep);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitCodeFor(e);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace
}  // namespace dualdet

int main(int argc, char** argv) { return dualdet::Main(argc, argv); }
