#ifndef DUALDET_DETECTOR_H_
#define DUALDET_DETECTOR_H_

#include <array>
#include <string>
#include <vector>

#include "dualdet/detection.h"
#include "dualdet/losses.h"
#include "dualdet/scene.h"
#include "json.hpp"

namespace dualdet {

// A head's query layout: one query per grid cell, row-major. Every anchor
// shares the same nominal size.
struct GridSpec {
  int cols = 0;
  int rows = 0;
  double anchor_w = 0.3;
  double anchor_h = 0.3;

  int size() const { return cols * rows; }
  bool enabled() const { return cols > 0 && rows > 0; }
  BBox Anchor(int index) const;
};

enum class Head { kO2O, kO2M };

const char* HeadName(Head head);

// Per-cell handcrafted features. The first five are neighborhood statistics
// over the 3x3-cell block around a cell (clamped at borders); the rest
// describe the contiguous bright region under the cell center.
enum Feature : int {
  kMean = 0,
  kVariance,
  kHGradEnergy,
  kVGradEnergy,
  kBias,
  kCoverage,      // fraction of the cell covered by table-like pixels
  kCenterDx,      // (region center x - anchor x) / anchor width
  kCenterDy,
  kLogWidth,      // log(region width / anchor width)
  kLogHeight,
  kCentralityX,   // 1 - |right - left| / (right + left)
  kCentralityY,
  kCentrality,    // product of the two above
  kFeatureDim,
};

struct FeatureMap {
  int cells = 0;
  std::vector<double> values;  // cells x kFeatureDim

  const double* cell(int i) const { return values.data() + i * kFeatureDim; }
};

// Smoothed intensity above which a pixel counts as table-like.
inline constexpr double kTableLikeThreshold = 0.45;

FeatureMap ExtractFeatures(const Raster& raster, const GridSpec& grid);

// Learnable parameters. Score and box weights are shared by both heads;
// each head owns its biases.
struct DetectorParams {
  std::vector<double> w_score;  // kFeatureDim
  std::vector<double> w_box;    // 4 x kFeatureDim, row-major
  double b_score_o2o = 0.0;
  double b_score_o2m = 0.0;
  std::array<double, 4> b_box_o2o{};
  std::array<double, 4> b_box_o2m{};

  static DetectorParams Zeros();

  size_t size() const;
  std::vector<double> Flatten() const;
  static DetectorParams FromFlat(const std::vector<double>& flat);

  bool operator==(const DetectorParams&) const = default;
};

struct DetectorConfig {
  GridSpec o2o_grid{6, 5};
  GridSpec o2m_grid{20, 20};
  double center_offset_limit = 0.5;
  double log_scale_limit = 0.7;

  const GridSpec& grid(Head head) const {
    return head == Head::kO2O ? o2o_grid : o2m_grid;
  }
};

Predictions Predict(const DetectorParams& params, const FeatureMap& features,
                    const DetectorConfig& cfg, Head head);
Predictions Predict(const DetectorParams& params, const Raster& raster,
                    const DetectorConfig& cfg, Head head);

// Chain rule from per-prediction gradients to parameters. Saturated clamps
// (score, offsets, final box range) contribute zero.
DetectorParams ParamGradients(const DetectorParams& params,
                              const FeatureMap& features,
                              const DetectorConfig& cfg, Head head,
                              const std::vector<PredGradient>& per_pred);
DetectorParams ParamGradients(const DetectorParams& params,
                              const Raster& raster, const DetectorConfig& cfg,
                              Head head,
                              const std::vector<PredGradient>& per_pred);

// params - lr * grads
DetectorParams SgdStep(const DetectorParams& params,
                       const DetectorParams& grads, double lr);

// m * teacher + (1 - m) * student
DetectorParams EmaUpdate(const DetectorParams& teacher,
                         const DetectorParams& student, double momentum);

// Multiplies the box weights and box biases by scale.
void ScaleBoxGradients(DetectorParams& grads, double scale);

// a += scale * b
void Accumulate(DetectorParams& a, const DetectorParams& b, double scale = 1.0);

double MaxAbsDifference(const DetectorParams& a, const DetectorParams& b);
bool AllFinite(const DetectorParams& params);

// Flat JSON object: field name -> array of numbers, plus a "config" block.
nlohmann::json CheckpointToJson(const DetectorParams& params,
                                const nlohmann::json& config_echo);
DetectorParams CheckpointFromJson(const nlohmann::json& j);
void SaveCheckpoint(const std::string& path, const DetectorParams& params,
                    const nlohmann::json& config_echo);
DetectorParams LoadCheckpoint(const std::string& path,
                              nlohmann::json* config_echo = nullptr);

}  // namespace dualdet

#endif  // DUALDET_DETECTOR_H_
