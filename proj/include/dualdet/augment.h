#ifndef DUALDET_AUGMENT_H_
#define DUALDET_AUGMENT_H_

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dualdet/rng.h"
#include "dualdet/scene.h"

namespace dualdet {

struct FlipOp {
  bool operator==(const FlipOp&) const = default;
};

// Window in normalized coordinates of the incoming view; the window is
// resampled back to the full raster size.
struct CropOp {
  double x0 = 0.0;
  double y0 = 0.0;
  double w = 1.0;
  double h = 1.0;

  double resize_x() const { return 1.0 / w; }
  double resize_y() const { return 1.0 / h; }
  bool operator==(const CropOp&) const = default;
};

struct EraseOp {
  double x0 = 0.0;
  double y0 = 0.0;
  double w = 0.0;
  double h = 0.0;
  double fill = 0.0;
  bool operator==(const EraseOp&) const = default;
};

struct NoiseOp {
  double sigma = 0.0;
  uint64_t seed = 0;
  bool operator==(const NoiseOp&) const = default;
};

using TransformOp = std::variant<FlipOp, CropOp, EraseOp, NoiseOp>;

// Ordered list of applied transforms. Replaying it on the source scene
// reproduces the augmented scene exactly.
struct TransformRecord {
  std::string source_id;
  std::vector<TransformOp> ops;

  bool operator==(const TransformRecord&) const = default;
};

struct AugmentConfig {
  double flip_prob = 0.5;
  double crop_prob = 0.5;
  double erase_prob = 0.5;
  double noise_prob = 0.5;
  double min_crop_fraction = 0.6;
  double min_kept_area = 0.3;  // boxes keeping less of their area are dropped
  int max_erase_windows = 2;
  double max_erase_area = 0.1;
  double max_noise_sigma = 0.1;
  double background_level = 0.15;
  int crop_retries = 10;
};

Scene ApplyRecord(const Scene& source, const TransformRecord& record,
                  const AugmentConfig& cfg = {});

// Horizontal flip with probability 0.5.
std::pair<Scene, TransformRecord> WeakAugment(const Scene& scene, Rng& rng,
                                              const AugmentConfig& cfg = {});

// Flip, scale-crop, patch erase and additive noise, each drawn
// independently, applied in that order.
std::pair<Scene, TransformRecord> StrongAugment(const Scene& scene, Rng& rng,
                                                const AugmentConfig& cfg = {});

// Maps boxes expressed in the `from` view into the `to` view: undo from's
// geometric transforms, then apply to's. Boxes cropped below the keep
// threshold are dropped.
Targets MapBoxes(const Targets& boxes, const TransformRecord& from,
                 const TransformRecord& to, const AugmentConfig& cfg = {});

}  // namespace dualdet

#endif  // DUALDET_AUGMENT_H_
