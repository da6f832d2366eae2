#include "dualdet/augment.h"

#include <algorithm>
#include <cmath>
#include <optional>

#include "dualdet/error.h"

namespace dualdet {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Raster FlipRaster(const Raster& r) {
  Raster out(r.width, r.height);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) out.at(x, y) = r.at(r.width - 1 - x, y);
  }
  return out;
}

int SourceIndex(double origin, double extent, int i, int n) {
  const int s = static_cast<int>(std::floor((origin + (i + 0.5) / n * extent) * n));
  return std::clamp(s, 0, n - 1);
}

Raster CropRaster(const Raster& r, const CropOp& c) {
  Raster out(r.width, r.height);
  for (int y = 0; y < r.height; ++y) {
    const int sy = SourceIndex(c.y0, c.h, y, r.height);
    for (int x = 0; x < r.width; ++x) {
      out.at(x, y) = r.at(SourceIndex(c.x0, c.w, x, r.width), sy);
    }
  }
  return out;
}

void EraseRaster(Raster& r, const EraseOp& e) {
  const int x0 = static_cast<int>(std::floor(e.x0 * r.width));
  const int x1 = static_cast<int>(std::ceil((e.x0 + e.w) * r.width));
  const int y0 = static_cast<int>(std::floor(e.y0 * r.height));
  const int y1 = static_cast<int>(std::ceil((e.y0 + e.h) * r.height));
  for (int y = std::max(y0, 0); y < std::min(y1, r.height); ++y) {
    for (int x = std::max(x0, 0); x < std::min(x1, r.width); ++x) {
      r.at(x, y) = e.fill;
    }
  }
}

void AddNoise(Raster& r, const NoiseOp& n) {
  Rng rng(n.seed);
  for (double& v : r.values) v = std::clamp(v + rng.Normal(0.0, n.sigma), 0.0, 1.0);
}

// Box into the crop window's frame; nullopt when too little of it survives.
std::optional<BBox> CropBox(const BBox& b, const CropOp& c, double min_kept) {
  const Corners bc = b.ToCorners();
  const Corners clipped{std::max(bc.x1, c.x0), std::max(bc.y1, c.y0),
                        std::min(bc.x2, c.x0 + c.w), std::min(bc.y2, c.y0 + c.h)};
  const double iw = clipped.x2 - clipped.x1;
  const double ih = clipped.y2 - clipped.y1;
  if (iw <= 0.0 || ih <= 0.0) return std::nullopt;
  if (iw * ih < min_kept * Area(b)) return std::nullopt;
  const Corners mapped{(clipped.x1 - c.x0) / c.w, (clipped.y1 - c.y0) / c.h,
                       (clipped.x2 - c.x0) / c.w, (clipped.y2 - c.y0) / c.h};
  return BBox::FromCorners(mapped);
}

BBox UncropBox(const BBox& b, const CropOp& c) {
  return {c.x0 + b.cx * c.w, c.y0 + b.cy * c.h, b.w * c.w, b.h * c.h};
}

// Forward geometric mapping of one box through a record.
std::optional<BBox> ForwardBox(BBox b, const TransformRecord& rec,
                               double min_kept) {
  for (const TransformOp& op : rec.ops) {
    if (std::holds_alternative<FlipOp>(op)) {
      b = FlipHorizontal(b);
    } else if (const auto* c = std::get_if<CropOp>(&op)) {
      const auto cropped = CropBox(b, *c, min_kept);
      if (!cropped) return std::nullopt;
      b = *cropped;
    }
  }
  return b;
}

BBox InverseBox(BBox b, const TransformRecord& rec) {
  for (auto it = rec.ops.rbegin(); it != rec.ops.rend(); ++it) {
    if (std::holds_alternative<FlipOp>(*it)) {
      b = FlipHorizontal(b);
    } else if (const auto* c = std::get_if<CropOp>(&*it)) {
      b = UncropBox(b, *c);
    }
  }
  return b;
}

CropOp SampleCrop(Rng& rng, const AugmentConfig& cfg) {
  CropOp c;
  c.w = rng.Uniform(cfg.min_crop_fraction, 1.0);
  c.h = rng.Uniform(cfg.min_crop_fraction, 1.0);
  c.x0 = rng.Uniform(0.0, 1.0 - c.w);
  c.y0 = rng.Uniform(0.0, 1.0 - c.h);
  return c;
}

EraseOp SampleErase(Rng& rng, const AugmentConfig& cfg) {
  EraseOp e;
  // w * h <= w * (max_area / w)
  e.w = rng.Uniform(0.05, 0.3);
  e.h = rng.Uniform(0.0, 1.0) * std::min(0.3, cfg.max_erase_area / e.w);
  e.x0 = rng.Uniform(0.0, 1.0 - e.w);
  e.y0 = rng.Uniform(0.0, 1.0 - e.h);
  e.fill = cfg.background_level;
  return e;
}

}  // namespace

Scene ApplyRecord(const Scene& source, const TransformRecord& record,
                  const AugmentConfig& cfg) {
  if (record.source_id != source.id) {
    throw Error(ErrorCode::kRecordMismatch, "record for '" + record.source_id +
                                                "' applied to scene '" +
                                                source.id + "'");
  }
  Scene out = source;
  for (const TransformOp& op : record.ops) {
    std::visit(Overloaded{
                   [&](const FlipOp&) {
                     out.raster = FlipRaster(out.raster);
                     for (auto& g : out.gt_boxes) g.box = FlipHorizontal(g.box);
                   },
                   [&](const CropOp& c) {
                     out.raster = CropRaster(out.raster, c);
                     Targets kept;
                     for (const auto& g : out.gt_boxes) {
                       if (auto b = CropBox(g.box, c, cfg.min_kept_area)) {
                         kept.push_back({*b, g.source});
                       }
                     }
                     out.gt_boxes = std::move(kept);
                   },
                   [&](const EraseOp& e) { EraseRaster(out.raster, e); },
                   [&](const NoiseOp& n) { AddNoise(out.raster, n); },
               },
               op);
  }
  return out;
}

std::pair<Scene, TransformRecord> WeakAugment(const Scene& scene, Rng& rng,
                                              const AugmentConfig& cfg) {
  TransformRecord rec{scene.id, {}};
  if (rng.Bernoulli(0.5)) rec.ops.push_back(FlipOp{});
  return {ApplyRecord(scene, rec, cfg), rec};
}

std::pair<Scene, TransformRecord> StrongAugment(const Scene& scene, Rng& rng,
                                                const AugmentConfig& cfg) {
  TransformRecord rec{scene.id, {}};
  if (rng.Bernoulli(cfg.flip_prob)) rec.ops.push_back(FlipOp{});

  if (rng.Bernoulli(cfg.crop_prob)) {
    // Boxes after the optional flip; only needed for the keep-any check.
    Targets boxes = scene.gt_boxes;
    if (!rec.ops.empty()) {
      for (auto& g : boxes) g.box = FlipHorizontal(g.box);
    }
    for (int attempt = 0; attempt < cfg.crop_retries; ++attempt) {
      const CropOp c = SampleCrop(rng, cfg);
      const bool keeps_any =
          boxes.empty() ||
          std::any_of(boxes.begin(), boxes.end(), [&](const GroundTruthBox& g) {
            return CropBox(g.box, c, cfg.min_kept_area).has_value();
          });
      if (keeps_any) {
        rec.ops.push_back(c);
        break;
      }
    }
  }

  if (rng.Bernoulli(cfg.erase_prob)) {
    const int n = rng.UniformInt(1, cfg.max_erase_windows);
    for (int i = 0; i < n; ++i) rec.ops.push_back(SampleErase(rng, cfg));
  }

  if (rng.Bernoulli(cfg.noise_prob)) {
    NoiseOp n;
    n.sigma = cfg.max_noise_sigma * (1.0 - rng.Uniform());  // (0, max]
    n.seed = rng.NextU64();
    rec.ops.push_back(n);
  }
  return {ApplyRecord(scene, rec, cfg), rec};
}

Targets MapBoxes(const Targets& boxes, const TransformRecord& from,
                 const TransformRecord& to, const AugmentConfig& cfg) {
  if (from.source_id != to.source_id) {
    throw Error(ErrorCode::kRecordMismatch, "records derive from '" +
                                                from.source_id + "' and '" +
                                                to.source_id + "'");
  }
  Targets out;
  for (const GroundTruthBox& g : boxes) {
    const BBox source_frame = InverseBox(g.box, from);
    if (auto b = ForwardBox(source_frame, to, cfg.min_kept_area)) {
      out.push_back({*b, g.source});
    }
  }
  return out;
}

}  // namespace dualdet
