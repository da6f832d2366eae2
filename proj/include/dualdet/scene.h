#ifndef DUALDET_SCENE_H_
#define DUALDET_SCENE_H_

#include <string>
#include <vector>

#include "dualdet/detection.h"

namespace dualdet {

// Grayscale image, row-major, intensities in [0, 1].
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  Raster() = default;
  Raster(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

  double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
  bool empty() const { return width <= 0 || height <= 0; }

  bool operator==(const Raster&) const = default;
};

struct Scene {
  std::string id;
  Raster raster;
  Targets gt_boxes;

  bool operator==(const Scene&) const = default;
};

using Dataset = std::vector<Scene>;

}  // namespace dualdet

#endif  // DUALDET_SCENE_H_
