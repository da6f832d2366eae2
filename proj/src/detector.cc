#include "dualdet/detector.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dualdet/error.h"

namespace dualdet {
namespace {

// Second moments of [0,1] intensities are O(0.01); scaled to O(0.1..1).
constexpr double kEnergyScale = 10.0;

struct PixelRange {
  int x0, x1, y0, y1;  // half-open

  int count() const { return (x1 - x0) * (y1 - y0); }
};

int CellStart(int cell, int cells, int pixels) {
  return static_cast<int>(static_cast<long>(cell) * pixels / cells);
}

// 3x3 box-filtered intensity thresholded into a table-like mask.
std::vector<char> TableLikeMask(const Raster& r) {
  std::vector<char> mask(r.values.size(), 0);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      double sum = 0.0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          const int yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= r.width || yy >= r.height) continue;
          sum += r.at(xx, yy);
          ++n;
        }
      }
      mask[static_cast<size_t>(y) * r.width + x] =
          (sum / n) > kTableLikeThreshold;
    }
  }
  return mask;
}

void NeighborhoodStats(const Raster& r, const PixelRange& pr, double* out) {
  double sum = 0.0;
  for (int y = pr.y0; y < pr.y1; ++y) {
    for (int x = pr.x0; x < pr.x1; ++x) sum += r.at(x, y);
  }
  const double mean = sum / pr.count();
  double var = 0.0;
  for (int y = pr.y0; y < pr.y1; ++y) {
    for (int x = pr.x0; x < pr.x1; ++x) {
      const double d = r.at(x, y) - mean;
      var += d * d;
    }
  }
  var /= pr.count();

  double hsum = 0.0;
  int hn = 0;
  double vsum = 0.0;
  int vn = 0;
  for (int y = pr.y0; y < pr.y1; ++y) {
    for (int x = pr.x0; x < pr.x1; ++x) {
      if (x + 1 < pr.x1) {
        const double d = r.at(x + 1, y) - r.at(x, y);
        hsum += d * d;
        ++hn;
      }
      if (y + 1 < pr.y1) {
        const double d = r.at(x, y + 1) - r.at(x, y);
        vsum += d * d;
        ++vn;
      }
    }
  }
  out[kMean] = mean;
  out[kVariance] = kEnergyScale * var;
  out[kHGradEnergy] = hn > 0 ? kEnergyScale * hsum / hn : 0.0;
  out[kVGradEnergy] = vn > 0 ? kEnergyScale * vsum / vn : 0.0;
  out[kBias] = 1.0;
}

void RegionFeatures(const Raster& r, const std::vector<char>& mask,
                    const GridSpec& grid, int col, int row,
                    const PixelRange& cell, double* out) {
  auto masked = [&](int x, int y) {
    return mask[static_cast<size_t>(y) * r.width + x] != 0;
  };
  int covered = 0;
  for (int y = cell.y0; y < cell.y1; ++y) {
    for (int x = cell.x0; x < cell.x1; ++x) covered += masked(x, y);
  }
  out[kCoverage] = static_cast<double>(covered) / cell.count();

  const int px = std::min(r.width - 1, static_cast<int>((col + 0.5) * r.width / grid.cols));
  const int py = std::min(r.height - 1, static_cast<int>((row + 0.5) * r.height / grid.rows));
  if (!masked(px, py)) return;

  int xl = px, xr = px, yt = py, yb = py;
  while (xl > 0 && masked(xl - 1, py)) --xl;
  while (xr + 1 < r.width && masked(xr + 1, py)) ++xr;
  while (yt > 0 && masked(px, yt - 1)) --yt;
  while (yb + 1 < r.height && masked(px, yb + 1)) ++yb;

  const double W = r.width;
  const double H = r.height;
  const BBox anchor = grid.Anchor(row * grid.cols + col);
  const double width = (xr + 1 - xl) / W;
  const double height = (yb + 1 - yt) / H;
  out[kCenterDx] = ((xl + xr + 1) / (2.0 * W) - anchor.cx) / grid.anchor_w;
  out[kCenterDy] = ((yt + yb + 1) / (2.0 * H) - anchor.cy) / grid.anchor_h;
  out[kLogWidth] = std::log(width / grid.anchor_w);
  out[kLogHeight] = std::log(height / grid.anchor_h);

  const double left = (px + 0.5 - xl) / W;
  const double right = (xr + 1 - (px + 0.5)) / W;
  const double top = (py + 0.5 - yt) / H;
  const double bottom = (yb + 1 - (py + 0.5)) / H;
  out[kCentralityX] = 1.0 - std::abs(right - left) / (right + left);
  out[kCentralityY] = 1.0 - std::abs(bottom - top) / (bottom + top);
  out[kCentrality] = out[kCentralityX] * out[kCentralityY];
}

void CheckParams(const DetectorParams& p) {
  if (p.w_score.size() != kFeatureDim || p.w_box.size() != 4 * kFeatureDim) {
    throw Error(ErrorCode::kShapeMismatch,
                "detector parameters do not match the feature dimension");
  }
}

double Logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Forward pass for one cell with the intermediate values needed by the
// backward pass.
struct CellForward {
  Prediction pred;
  double raw_offset[4];
  double unclamped[4];  // box coordinates before the final range clamp
};

CellForward ForwardCell(const DetectorParams& params, const double* phi,
                        const BBox& anchor, const DetectorConfig& cfg,
                        Head head) {
  const bool o2o = head == Head::kO2O;
  double z = o2o ? params.b_score_o2o : params.b_score_o2m;
  for (int k = 0; k < kFeatureDim; ++k) z += params.w_score[k] * phi[k];

  const std::array<double, 4>& bias = o2o ? params.b_box_o2o : params.b_box_o2m;
  CellForward f;
  double off[4];
  for (int c = 0; c < 4; ++c) {
    double o = bias[c];
    const double* row = params.w_box.data() + c * kFeatureDim;
    for (int k = 0; k < kFeatureDim; ++k) o += row[k] * phi[k];
    f.raw_offset[c] = o;
    const double limit = c < 2 ? cfg.center_offset_limit : cfg.log_scale_limit;
    off[c] = std::clamp(o, -limit, limit);
  }
  f.unclamped[0] = anchor.cx + off[0];
  f.unclamped[1] = anchor.cy + off[1];
  f.unclamped[2] = anchor.w * std::exp(off[2]);
  f.unclamped[3] = anchor.h * std::exp(off[3]);
  f.pred.score = Logistic(z);
  f.pred.box = {std::clamp(f.unclamped[0], 0.0, 1.0),
                std::clamp(f.unclamped[1], 0.0, 1.0),
                std::min(f.unclamped[2], 1.0), std::min(f.unclamped[3], 1.0)};
  return f;
}

}  // namespace

BBox GridSpec::Anchor(int index) const {
  const int c = index % cols;
  const int r = index / cols;
  return {(c + 0.5) / cols, (r + 0.5) / rows, anchor_w, anchor_h};
}

const char* HeadName(Head head) { return head == Head::kO2O ? "o2o" : "o2m"; }

FeatureMap ExtractFeatures(const Raster& raster, const GridSpec& grid) {
  if (raster.empty()) {
    throw Error(ErrorCode::kInvalidGrid, "raster is empty");
  }
  if (!grid.enabled() || grid.cols > raster.width ||
      grid.rows > raster.height) {
    std::ostringstream msg;
    msg << "grid " << grid.cols << "x" << grid.rows
        << " does not fit raster " << raster.width << "x" << raster.height;
    throw Error(ErrorCode::kInvalidGrid, msg.str());
  }
  const std::vector<char> mask = TableLikeMask(raster);

  FeatureMap fm;
  fm.cells = grid.size();
  fm.values.assign(static_cast<size_t>(fm.cells) * kFeatureDim, 0.0);
  for (int row = 0; row < grid.rows; ++row) {
    for (int col = 0; col < grid.cols; ++col) {
      double* out = fm.values.data() + (row * grid.cols + col) * kFeatureDim;
      const PixelRange hood{
          CellStart(std::max(col - 1, 0), grid.cols, raster.width),
          CellStart(std::min(col + 2, grid.cols), grid.cols, raster.width),
          CellStart(std::max(row - 1, 0), grid.rows, raster.height),
          CellStart(std::min(row + 2, grid.rows), grid.rows, raster.height)};
      NeighborhoodStats(raster, hood, out);
      const PixelRange cell{CellStart(col, grid.cols, raster.width),
                            CellStart(col + 1, grid.cols, raster.width),
                            CellStart(row, grid.rows, raster.height),
                            CellStart(row + 1, grid.rows, raster.height)};
      RegionFeatures(raster, mask, grid, col, row, cell, out);
    }
  }
  return fm;
}

DetectorParams DetectorParams::Zeros() {
  DetectorParams p;
  p.w_score.assign(kFeatureDim, 0.0);
  p.w_box.assign(4 * kFeatureDim, 0.0);
  return p;
}

size_t DetectorParams::size() const {
  return w_score.size() + w_box.size() + 2 + 8;
}

std::vector<double> DetectorParams::Flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  flat.insert(flat.end(), w_score.begin(), w_score.end());
  flat.insert(flat.end(), w_box.begin(), w_box.end());
  flat.push_back(b_score_o2o);
  flat.push_back(b_score_o2m);
  flat.insert(flat.end(), b_box_o2o.begin(), b_box_o2o.end());
  flat.insert(flat.end(), b_box_o2m.begin(), b_box_o2m.end());
  return flat;
}

DetectorParams DetectorParams::FromFlat(const std::vector<double>& flat) {
  DetectorParams p = Zeros();
  if (flat.size() != p.size()) {
    throw Error(ErrorCode::kShapeMismatch, "flat parameter vector has size " +
                                               std::to_string(flat.size()));
  }
  auto it = flat.begin();
  std::copy_n(it, kFeatureDim, p.w_score.begin());
  it += kFeatureDim;
  std::copy_n(it, 4 * kFeatureDim, p.w_box.begin());
  it += 4 * kFeatureDim;
  p.b_score_o2o = *it++;
  p.b_score_o2m = *it++;
  std::copy_n(it, 4, p.b_box_o2o.begin());
  it += 4;
  std::copy_n(it, 4, p.b_box_o2m.begin());
  return p;
}

Predictions Predict(const DetectorParams& params, const FeatureMap& features,
                    const DetectorConfig& cfg, Head head) {
  CheckParams(params);
  const GridSpec& grid = cfg.grid(head);
  if (features.cells != grid.size()) {
    throw Error(ErrorCode::kInvalidGrid,
                "feature map does not belong to the requested head");
  }
  Predictions out;
  out.reserve(grid.size());
  for (int i = 0; i < grid.size(); ++i) {
    out.push_back(
        ForwardCell(params, features.cell(i), grid.Anchor(i), cfg, head).pred);
  }
  return out;
}

Predictions Predict(const DetectorParams& params, const Raster& raster,
                    const DetectorConfig& cfg, Head head) {
  const GridSpec& grid = cfg.grid(head);
  if (!grid.enabled()) return {};
  return Predict(params, ExtractFeatures(raster, grid), cfg, head);
}

DetectorParams ParamGradients(const DetectorParams& params,
                              const FeatureMap& features,
                              const DetectorConfig& cfg, Head head,
                              const std::vector<PredGradient>& per_pred) {
  CheckParams(params);
  const GridSpec& grid = cfg.grid(head);
  if (per_pred.size() != static_cast<size_t>(grid.size()) ||
      features.cells != grid.size()) {
    std::ostringstream msg;
    msg << "expected " << grid.size() << " per-prediction gradients for head "
        << HeadName(head) << ", got " << per_pred.size();
    throw Error(ErrorCode::kGradientShape, msg.str());
  }

  DetectorParams g = DetectorParams::Zeros();
  const bool o2o = head == Head::kO2O;
  double& gb_score = o2o ? g.b_score_o2o : g.b_score_o2m;
  std::array<double, 4>& gb_box = o2o ? g.b_box_o2o : g.b_box_o2m;

  for (int i = 0; i < grid.size(); ++i) {
    const PredGradient& pg = per_pred[i];
    const bool active = pg.d_score != 0.0 || pg.d_box[0] != 0.0 ||
                        pg.d_box[1] != 0.0 || pg.d_box[2] != 0.0 ||
                        pg.d_box[3] != 0.0;
    if (!active) continue;
    const double* phi = features.cell(i);
    const CellForward f = ForwardCell(params, phi, grid.Anchor(i), cfg, head);

    const double p = f.pred.score;
    const double dz = pg.d_score * p * (1.0 - p);
    if (dz != 0.0) {
      gb_score += dz;
      for (int k = 0; k < kFeatureDim; ++k) g.w_score[k] += dz * phi[k];
    }

    for (int c = 0; c < 4; ++c) {
      const double limit = c < 2 ? cfg.center_offset_limit : cfg.log_scale_limit;
      if (std::abs(f.raw_offset[c]) > limit) continue;
      double d;
      if (c < 2) {
        if (f.unclamped[c] < 0.0 || f.unclamped[c] > 1.0) continue;
        d = pg.d_box[c];
      } else {
        if (f.unclamped[c] > 1.0) continue;
        d = pg.d_box[c] * f.unclamped[c];
      }
      if (d == 0.0) continue;
      gb_box[c] += d;
      double* row = g.w_box.data() + c * kFeatureDim;
      for (int k = 0; k < kFeatureDim; ++k) row[k] += d * phi[k];
    }
  }
  return g;
}

DetectorParams ParamGradients(const DetectorParams& params,
                              const Raster& raster, const DetectorConfig& cfg,
                              Head head,
                              const std::vector<PredGradient>& per_pred) {
  return ParamGradients(params, ExtractFeatures(raster, cfg.grid(head)), cfg,
                        head, per_pred);
}

DetectorParams SgdStep(const DetectorParams& params,
                       const DetectorParams& grads, double lr) {
  DetectorParams out = params;
  Accumulate(out, grads, -lr);
  return out;
}

DetectorParams EmaUpdate(const DetectorParams& teacher,
                         const DetectorParams& student, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorCode::kInvalidParameter, "EMA momentum must lie in [0, 1)");
  }
  const std::vector<double> t = teacher.Flatten();
  const std::vector<double> s = student.Flatten();
  if (t.size() != s.size()) {
    throw Error(ErrorCode::kShapeMismatch, "teacher and student differ in shape");
  }
  std::vector<double> out(t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    out[i] = momentum * t[i] + (1.0 - momentum) * s[i];
  }
  return DetectorParams::FromFlat(out);
}

void ScaleBoxGradients(DetectorParams& grads, double scale) {
  for (double& v : grads.w_box) v *= scale;
  for (double& v : grads.b_box_o2o) v *= scale;
  for (double& v : grads.b_box_o2m) v *= scale;
}

void Accumulate(DetectorParams& a, const DetectorParams& b, double scale) {
  CheckParams(a);
  CheckParams(b);
  for (size_t i = 0; i < a.w_score.size(); ++i) a.w_score[i] += scale * b.w_score[i];
  for (size_t i = 0; i < a.w_box.size(); ++i) a.w_box[i] += scale * b.w_box[i];
  a.b_score_o2o += scale * b.b_score_o2o;
  a.b_score_o2m += scale * b.b_score_o2m;
  for (int c = 0; c < 4; ++c) {
    a.b_box_o2o[c] += scale * b.b_box_o2o[c];
    a.b_box_o2m[c] += scale * b.b_box_o2m[c];
  }
}

double MaxAbsDifference(const DetectorParams& a, const DetectorParams& b) {
  const std::vector<double> fa = a.Flatten();
  const std::vector<double> fb = b.Flatten();
  if (fa.size() != fb.size()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter sets differ in shape");
  }
  double m = 0.0;
  for (size_t i = 0; i < fa.size(); ++i) m = std::max(m, std::abs(fa[i] - fb[i]));
  return m;
}

bool AllFinite(const DetectorParams& params) {
  for (double v : params.Flatten()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

nlohmann::json CheckpointToJson(const DetectorParams& params,
                                const nlohmann::json& config_echo) {
  CheckParams(params);
  nlohmann::json j;
  j["w_score"] = params.w_score;
  j["w_box"] = params.w_box;
  j["b_score_o2o"] = {params.b_score_o2o};
  j["b_score_o2m"] = {params.b_score_o2m};
  j["b_box_o2o"] = params.b_box_o2o;
  j["b_box_o2m"] = params.b_box_o2m;
  nlohmann::json config = config_echo.is_object() ? config_echo : nlohmann::json::object();
  config["feature_dim"] = static_cast<int>(kFeatureDim);
  j["config"] = config;
  return j;
}

DetectorParams CheckpointFromJson(const nlohmann::json& j) {
  try {
    DetectorParams p = DetectorParams::Zeros();
    const auto w_score = j.at("w_score").get<std::vector<double>>();
    const auto w_box = j.at("w_box").get<std::vector<double>>();
    const auto b_o2o = j.at("b_score_o2o").get<std::vector<double>>();
    const auto b_o2m = j.at("b_score_o2m").get<std::vector<double>>();
    const auto bb_o2o = j.at("b_box_o2o").get<std::vector<double>>();
    const auto bb_o2m = j.at("b_box_o2m").get<std::vector<double>>();
    if (w_score.size() != kFeatureDim || w_box.size() != 4 * kFeatureDim ||
        b_o2o.size() != 1 || b_o2m.size() != 1 || bb_o2o.size() != 4 ||
        bb_o2m.size() != 4) {
      throw Error(ErrorCode::kShapeMismatch,
                  "checkpoint arrays do not match the detector layout");
    }
    p.w_score = w_score;
    p.w_box = w_box;
    p.b_score_o2o = b_o2o[0];
    p.b_score_o2m = b_o2m[0];
    std::copy_n(bb_o2o.begin(), 4, p.b_box_o2o.begin());
    std::copy_n(bb_o2m.begin(), 4, p.b_box_o2m.begin());
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("checkpoint: ") + e.what());
  }
}

void SaveCheckpoint(const std::string& path, const DetectorParams& params,
                    const nlohmann::json& config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << CheckpointToJson(params, config_echo).dump(2) << "\n";
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

DetectorParams LoadCheckpoint(const std::string& path,
                              nlohmann::json* config_echo) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  if (config_echo != nullptr && j.contains("config")) *config_echo = j["config"];
  return CheckpointFromJson(j);
}

}  // namespace dualdet
