#ifndef DUALDET_DETECTION_H_
#define DUALDET_DETECTION_H_

#include <vector>

#include "dualdet/geometry.h"

namespace dualdet {

// Scored detector output; score is the table confidence in [0, 1].
struct Prediction {
  BBox box;
  double score = 0.0;

  bool operator==(const Prediction&) const = default;
};

// Annotation target. `source` is the index of the original target when the
// box is a replica produced for one-to-many matching, -1 otherwise.
struct GroundTruthBox {
  BBox box;
  int source = -1;

  bool operator==(const GroundTruthBox&) const = default;
};

using Predictions = std::vector<Prediction>;
using Targets = std::vector<GroundTruthBox>;

}  // namespace dualdet

#endif  // DUALDET_DETECTION_H_
