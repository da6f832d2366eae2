#include "dualdet/geometry.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dualdet/error.h"

namespace dualdet {

BBox BBox::FromCorners(const Corners& c) {
  const double w = c.x2 - c.x1;
  const double h = c.y2 - c.y1;
  return {c.x1 + 0.5 * w, c.y1 + 0.5 * h, w, h};
}

Corners BBox::ToCorners() const {
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

bool BBox::IsValid() const {
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) ||
      !std::isfinite(h)) {
    return false;
  }
  return cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0 && w > 0.0 &&
         h > 0.0;
}

void RequirePositiveArea(const BBox& b) {
  if (!(std::isfinite(b.w) && std::isfinite(b.h) && b.w > 0.0 && b.h > 0.0)) {
    std::ostringstream msg;
    msg << "degenerate box (w=" << b.w << ", h=" << b.h << ")";
    throw Error(ErrorCode::kInvalidGeometry, msg.str());
  }
}

double Area(const BBox& b) { return b.w * b.h; }

double IntersectionArea(const BBox& a, const BBox& b) {
  const Corners ca = a.ToCorners();
  const Corners cb = b.ToCorners();
  const double iw = std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1);
  const double ih = std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double Iou(const BBox& a, const BBox& b) {
  RequirePositiveArea(a);
  RequirePositiveArea(b);
  const double inter = IntersectionArea(a, b);
  const double uni = Area(a) + Area(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double L1BoxDistance(const BBox& a, const BBox& b) {
  return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) +
         std::abs(a.h - b.h);
}

BBox FlipHorizontal(const BBox& b) { return {1.0 - b.cx, b.cy, b.w, b.h}; }

BBox ClipToUnit(const BBox& b) {
  Corners c = b.ToCorners();
  c.x1 = std::clamp(c.x1, 0.0, 1.0);
  c.x2 = std::clamp(c.x2, 0.0, 1.0);
  c.y1 = std::clamp(c.y1, 0.0, 1.0);
  c.y2 = std::clamp(c.y2, 0.0, 1.0);
  return BBox::FromCorners(c);
}

}  // namespace dualdet
