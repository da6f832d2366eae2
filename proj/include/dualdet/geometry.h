#ifndef DUALDET_GEOMETRY_H_
#define DUALDET_GEOMETRY_H_

#include <array>

namespace dualdet {

struct Corners {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
};

// Axis-aligned box in normalized center form. All geometry in the library is
// expressed as fractions of image width/height; pixels only appear at
// ingestion boundaries.
struct BBox {
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.0;
  double h = 0.0;

  static BBox FromCorners(const Corners& c);
  Corners ToCorners() const;

  std::array<double, 4> AsArray() const { return {cx, cy, w, h}; }
  static BBox FromArray(const std::array<double, 4>& v) {
    return {v[0], v[1], v[2], v[3]};
  }

  // Full invariant: finite, center inside the unit square, positive extent.
  bool IsValid() const;

  bool operator==(const BBox&) const = default;
};

// Throws kInvalidGeometry unless w and h are finite and > 0.
void RequirePositiveArea(const BBox& b);

double Area(const BBox& b);
double IntersectionArea(const BBox& a, const BBox& b);

// Intersection over union. Only positive extent is required, so the
// function also works on pixel-unit boxes.
double Iou(const BBox& a, const BBox& b);

// |dcx| + |dcy| + |dw| + |dh|.
double L1BoxDistance(const BBox& a, const BBox& b);

// Mirror about the vertical axis of the unit square.
BBox FlipHorizontal(const BBox& b);

// Clips to the unit square and returns the result; the returned box may
// have zero extent when b lies entirely outside.
BBox ClipToUnit(const BBox& b);

}  // namespace dualdet

#endif  // DUALDET_GEOMETRY_H_
