#include <cmath>

#include <gtest/gtest.h>

#include "dualdet/augment.h"
#include "dualdet/data.h"
#include "dualdet/error.h"
#include "dualdet/rng.h"

namespace dualdet {
namespace {

Scene MakeScene(uint64_t seed) {
  Rng rng(seed);
  return GenerateScene(rng, LayoutConfig{}, "scene-" + std::to_string(seed));
}

TEST(WeakAugment, FlipIsAnInvolution) {
  const Scene s = MakeScene(1);
  const TransformRecord flip{s.id, {FlipOp{}, FlipOp{}}};
  EXPECT_EQ(ApplyRecord(s, flip), s);
}

TEST(WeakAugment, MirrorsBoxCenters) {
  Scene s = MakeScene(2);
  s.gt_boxes = {{{0.3, 0.4, 0.2, 0.2}}};
  const Scene f = ApplyRecord(s, {s.id, {FlipOp{}}});
  EXPECT_NEAR(f.gt_boxes[0].box.cx, 0.7, 1e-15);
  EXPECT_EQ(f.gt_boxes[0].box.cy, 0.4);
  EXPECT_EQ(f.raster.at(0, 5), s.raster.at(s.raster.width - 1, 5));
}

TEST(WeakAugment, SeededAndOnlyFlips) {
  const Scene s = MakeScene(3);
  int flips = 0;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    Rng a(seed), b(seed);
    const auto [sa, ra] = WeakAugment(s, a);
    const auto [sb, rb] = WeakAugment(s, b);
    EXPECT_EQ(sa, sb);
    EXPECT_EQ(ra, rb);
    ASSERT_LE(ra.ops.size(), 1u);
    if (!ra.ops.empty()) {
      EXPECT_TRUE(std::holds_alternative<FlipOp>(ra.ops[0]));
      ++flips;
    }
  }
  EXPECT_GT(flips, 70);
  EXPECT_LT(flips, 130);
}

TEST(StrongAugment, AllSkippedIsIdentity) {
  const Scene s = MakeScene(4);
  AugmentConfig cfg;
  cfg.flip_prob = cfg.crop_prob = cfg.erase_prob = cfg.noise_prob = 0.0;
  Rng rng(1);
  const auto [out, rec] = StrongAugment(s, rng, cfg);
  EXPECT_EQ(out, s);
  EXPECT_TRUE(rec.ops.empty());
}

TEST(StrongAugment, NoiseOnlyKeepsBoxes) {
  const Scene s = MakeScene(5);
  AugmentConfig cfg;
  cfg.flip_prob = cfg.crop_prob = cfg.erase_prob = 0.0;
  cfg.noise_prob = 1.0;
  Rng rng(2);
  const auto [out, rec] = StrongAugment(s, rng, cfg);
  EXPECT_EQ(out.gt_boxes, s.gt_boxes);
  EXPECT_NE(out.raster, s.raster);
  ASSERT_EQ(rec.ops.size(), 1u);
  const auto& n = std::get<NoiseOp>(rec.ops[0]);
  EXPECT_GT(n.sigma, 0.0);
  EXPECT_LE(n.sigma, 0.1);
}

TEST(StrongAugment, CropRenormalizesContainedBox) {
  Scene s = MakeScene(6);
  s.gt_boxes = {{BBox::FromCorners({0.3, 0.3, 0.5, 0.6})}};
  const CropOp c{0.2, 0.1, 0.7, 0.8};
  const Scene out = ApplyRecord(s, {s.id, {c}});
  ASSERT_EQ(out.gt_boxes.size(), 1u);
  const Corners k = out.gt_boxes[0].box.ToCorners();
  EXPECT_NEAR(k.x1, (0.3 - 0.2) / 0.7, 1e-12);
  EXPECT_NEAR(k.y1, (0.3 - 0.1) / 0.8, 1e-12);
  EXPECT_NEAR(k.x2, (0.5 - 0.2) / 0.7, 1e-12);
  EXPECT_NEAR(k.y2, (0.6 - 0.1) / 0.8, 1e-12);
  EXPECT_NEAR(c.resize_x(), 1 / 0.7, 1e-15);
}

TEST(StrongAugment, CropDropsMostlyRemovedBoxes) {
  Scene s = MakeScene(7);
  // 20% of this box lies inside the window, 80% outside.
  s.gt_boxes = {{BBox::FromCorners({0.0, 0.0, 0.5, 0.5})}, {BBox::FromCorners({0.6, 0.6, 0.8, 0.8})}};
  const Scene out = ApplyRecord(s, {s.id, {CropOp{0.4, 0.0, 0.6, 1.0}}});
  ASSERT_EQ(out.gt_boxes.size(), 1u);
}

TEST(StrongAugment, RecordsReplayAndBoxesStayValid) {
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const Scene s = MakeScene(seed);
    Rng rng(seed * 7 + 1);
    const auto [out, rec] = StrongAugment(s, rng);
    EXPECT_EQ(ApplyRecord(s, rec), out);
    for (const auto& g : out.gt_boxes) EXPECT_TRUE(g.box.IsValid());
    for (double v : out.raster.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    int erases = 0;
    for (const auto& op : rec.ops) {
      if (const auto* c = std::get_if<CropOp>(&op)) {
        EXPECT_GE(c->w, 0.6);
        EXPECT_GE(c->h, 0.6);
        EXPECT_FALSE(out.gt_boxes.empty());
      }
      if (const auto* e = std::get_if<EraseOp>(&op)) {
        EXPECT_LE(e->w * e->h, 0.1 + 1e-12);
        ++erases;
      }
    }
    EXPECT_LE(erases, 2);
  }
}

TEST(MapBoxes, SameRecordIsIdentity) {
  const Scene s = MakeScene(8);
  Rng rng(3);
  const auto [out, rec] = StrongAugment(s, rng);
  const Targets mapped = MapBoxes(out.gt_boxes, rec, rec);
  ASSERT_EQ(mapped.size(), out.gt_boxes.size());
  for (size_t i = 0; i < mapped.size(); ++i) {
    EXPECT_NEAR(mapped[i].box.cx, out.gt_boxes[i].box.cx, 1e-12);
    EXPECT_NEAR(mapped[i].box.w, out.gt_boxes[i].box.w, 1e-12);
  }
}

TEST(MapBoxes, WeakFlipToPlainMirrorsOnce) {
  const TransformRecord weak{"x", {FlipOp{}}}, strong{"x", {}};
  const Targets m = MapBoxes({{{0.2, 0.5, 0.1, 0.1}}}, weak, strong);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NEAR(m[0].box.cx, 0.8, 1e-15);
}

TEST(MapBoxes, CropThenFlipByHand) {
  const TransformRecord weak{"x", {}};
  const CropOp c{0.1, 0.2, 0.8, 0.7};
  const TransformRecord strong{"x", {c, FlipOp{}}};
  const BBox b = BBox::FromCorners({0.3, 0.4, 0.5, 0.6});
  const Targets m = MapBoxes({{b}}, weak, strong);
  ASSERT_EQ(m.size(), 1u);
  // Crop: x -> (x - 0.1) / 0.8, y -> (y - 0.2) / 0.7. Flip: x -> 1 - x.
  const Corners k = m[0].box.ToCorners();
  EXPECT_NEAR(k.x1, 1 - (0.5 - 0.1) / 0.8, 1e-12);
  EXPECT_NEAR(k.x2, 1 - (0.3 - 0.1) / 0.8, 1e-12);
  EXPECT_NEAR(k.y1, (0.4 - 0.2) / 0.7, 1e-12);
  EXPECT_NEAR(k.y2, (0.6 - 0.2) / 0.7, 1e-12);
}

TEST(MapBoxes, AgreesWithAugmentedGroundTruth) {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const Scene s = MakeScene(seed + 50);
    Rng rng(seed);
    const auto [weak, wrec] = WeakAugment(s, rng);
    const auto [strong, srec] = StrongAugment(s, rng);
    const Targets mapped = MapBoxes(weak.gt_boxes, wrec, srec);
    ASSERT_EQ(mapped.size(), strong.gt_boxes.size());
    for (size_t i = 0; i < mapped.size(); ++i) {
      EXPECT_NEAR(Iou(mapped[i].box, strong.gt_boxes[i].box), 1.0, 1e-9);
    }
  }
}

TEST(MapBoxes, FlipOnlyMapsPreserveIou) {
  Rng rng(10);
  const TransformRecord a{"x", {FlipOp{}}}, b{"x", {}};
  for (int i = 0; i < 200; ++i) {
    const double w1 = rng.Uniform(0.05, 0.4), w2 = rng.Uniform(0.05, 0.4);
    const BBox p{rng.Uniform(w1 / 2, 1 - w1 / 2), 0.5, w1, 0.2};
    const BBox q{rng.Uniform(w2 / 2, 1 - w2 / 2), 0.45, w2, 0.3};
    const Targets m = MapBoxes({{p}, {q}}, a, b);
    EXPECT_NEAR(Iou(m[0].box, m[1].box), Iou(p, q), 1e-12);
  }
}

TEST(MapBoxes, DifferentSourcesThrow) {
  try {
    MapBoxes({}, {"a", {}}, {"b", {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRecordMismatch);
  }
  EXPECT_THROW(ApplyRecord(MakeScene(1), {"other", {}}), Error);
}

}  // namespace
}  // namespace dualdet
