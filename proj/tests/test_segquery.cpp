// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "dualsplat/segquery.hpp"
#include "dualsplat/synth.hpp"
#include "test_util.hpp"

namespace dualsplat {
namespace {

BinaryMask disk(int w, int h, double cx, double cy, double r) {
  BinaryMask m(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) m.at(x, y) = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  }
  return m;
}

TEST(ExtractMask, ThresholdIsStrict) {
  ImageBuffer s(3, 1, 1);
  s.values = {0.5, 0.51, 0.2};
  const BinaryMask m = extract_mask(s, 0.5);
  EXPECT_EQ(m.values, std::vector<std::uint8_t>({0, 1, 0}));
  EXPECT_THROW(extract_mask(s, 0.0), std::invalid_argument);
  EXPECT_THROW(extract_mask(s, 1.0), std::invalid_argument);
  EXPECT_THROW(extract_mask(ImageBuffer(2, 2, 3)), std::invalid_argument);
}

TEST(Iou, CountsIntersectionOverUnion) {
  BinaryMask a(4, 1, 1), b(4, 1, 1);
  a.values = {1, 1, 1, 0};
  b.values = {0, 1, 1, 1};
  EXPECT_DOUBLE_EQ(iou(a, b), 0.5);
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(BinaryMask(4, 1, 1), BinaryMask(4, 1, 1)), 1.0);
  EXPECT_THROW(iou(a, BinaryMask(3, 1, 1)), std::invalid_argument);
}

TEST(LabelMask, SelectsOneId) {
  IdMap ids(4, 1, 1);
  ids.values = {0, 2, 1, 2};
  EXPECT_EQ(label_mask(ids, 2).values, std::vector<std::uint8_t>({0, 1, 0, 1}));
  EXPECT_EQ(mask_area(label_mask(ids, 2)), 2u);
}

TEST(MaskBoundary, OnlyEdgePixels) {
  BinaryMask m(5, 5, 1);
  for (int y = 1; y <= 3; ++y) {
    for (int x = 1; x <= 3; ++x) m.at(x, y) = 1;
  }
  const BinaryMask b = mask_boundary(m);
  EXPECT_EQ(mask_area(b), 8u);
  EXPECT_EQ(b.at(2, 2), 0);
}

TEST(BoundaryIou, PenalizesShiftedEdgesMoreThanIou) {
  const BinaryMask a = disk(64, 64, 32, 32, 15), b = disk(64, 64, 34, 32, 15);
  EXPECT_DOUBLE_EQ(boundary_iou(a, a), 1.0);
  EXPECT_LT(boundary_iou(a, b), iou(a, b));
  EXPECT_GT(boundary_iou(a, b), 0.0);
  // A huge band covers the whole image and reduces to plain IoU.
  EXPECT_DOUBLE_EQ(boundary_iou(a, b, 200.0), iou(a, b));
}

TEST(MaxWeightLabelMap, PicksHeaviestContributor) {
  GaussianCloud c;
  c.object_count = 2;
  c.resize(2);
  c.positions = {0.0f, 0.0f, 2.0f, 0.0f, 0.0f, 3.0f};
  c.log_scales.assign(6, -1.0f);
  c.opacity_logits = {static_cast<float>(logit(0.2)), static_cast<float>(logit(0.9))};
  c.labels = {1, 2};
  Camera cam = testing::front_camera(9, 9);
  cam.cx = cam.cy = 4.0;
  // Front weight 0.2, back weight 0.9 * 0.8 = 0.72.
  const IdMap m = max_weight_label_map(c, cam);
  EXPECT_EQ(m.at(4, 4), 2);
  c.opacity_logits[0] = static_cast<float>(logit(0.6));
  EXPECT_EQ(max_weight_label_map(c, cam).at(4, 4), 1);
}

TEST(ResizeBilinear, IdentityAndConstant) {
  std::mt19937_64 rng(1);
  ImageBuffer img(6, 5, 3);
  for (double& v : img.values) v = static_cast<double>(rng() % 100) / 100.0;
  EXPECT_EQ(resize_bilinear(img, 6, 5).values, img.values);
  ImageBuffer flat(7, 3, 1);
  for (double& v : flat.values) v = 0.25;
  for (double v : resize_bilinear(flat, 13, 11).values) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(CropObject, ZeroesBackgroundAndKeepsObjectColor) {
  ImageBuffer img(40, 30, 3);
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 40; ++x) img.at(x, y, 0) = 0.3;
  }
  const BinaryMask m = disk(40, 30, 20, 15, 6);
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 40; ++x) {
      if (m.at(x, y)) img.at(x, y, 1) = 0.8;
    }
  }
  const ImageBuffer crop = crop_object(img, m, 16, 16);
  EXPECT_EQ(crop.width, 16);
  EXPECT_EQ(crop.at(0, 0, 0), 0.0);
  EXPECT_NEAR(crop.at(8, 8, 1), 0.8, 1e-12);
  EXPECT_THROW(crop_object(img, BinaryMask(40, 30, 1), 16, 16), std::invalid_argument);
}

TEST(StubEmbedding, TextAndImageShareColorSpace) {
  StubEmbeddingProvider p;
  ImageBuffer red(4, 4, 3);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      red.at(x, y, 0) = 0.9;
      red.at(x, y, 1) = 0.15;
      red.at(x, y, 2) = 0.1;
    }
  }
  const auto a = p.embed_image(red), b = p.embed_text("Red");
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t d = 0; d < a.size(); ++d) EXPECT_NEAR(a[d], b[d], 1e-12);
  EXPECT_EQ(p.embed_text("a chair"), p.embed_text("a chair"));
  EXPECT_NE(p.embed_text("a chair"), p.embed_text("a table"));
  EXPECT_EQ(StubEmbeddingProvider::parse_color("#ff0000"), Vec3(1.0, 0.0, 0.0));
}

TEST(QueryVector, ArgmaxCosineWithSmallestIdTies) {
  ObjectEmbeddingPool pool;
  pool.descriptors[1] = {1.0, 0.0};
  pool.descriptors[2] = {0.0, 1.0};
  pool.descriptors[3] = {0.0, 1.0};
  EXPECT_EQ(query_vector({0.9, 0.1}, pool), 1);
  EXPECT_EQ(query_vector({0.1, 5.0}, pool), 2);
  EXPECT_THROW(query_vector({0.0, 0.0}, pool), std::invalid_argument);
  EXPECT_THROW(query_vector({1.0}, pool), std::invalid_argument);
  EXPECT_THROW(query_vector({1.0, 0.0}, ObjectEmbeddingPool{}), std::invalid_argument);
}

TEST(AggregateEmbedding, IsNormalizedMeanAndSkipsEmptyMasks) {
  StubEmbeddingProvider p;
  ImageBuffer a(8, 8, 3), b(8, 8, 3);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      a.at(x, y, 0) = 1.0;
      b.at(x, y, 1) = 1.0;
    }
  }
  const BinaryMask full = disk(8, 8, 3.5, 3.5, 10);
  const auto f = aggregate_embedding({a, b, a}, {full, full, BinaryMask(8, 8, 1)}, p);
  EXPECT_NEAR(f[0], std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(f[1], std::sqrt(0.5), 1e-12);
  EXPECT_THROW(aggregate_embedding({a}, {BinaryMask(8, 8, 1)}, p), std::invalid_argument);
}

TEST(Query, FindsObjectsByColorOnSyntheticScene) {
  SceneSpec spec;
  spec.gaussians_per_object = 150;
  spec.views = 8;
  spec.width = spec.height = 48;
  const SyntheticScene s = generate_scene(spec);
  StubEmbeddingProvider p;
  const ObjectEmbeddingPool pool = build_embedding_pool(s.cloud, s.dataset.cameras, p, 3);
  ASSERT_EQ(pool.descriptors.size(), 3u);
  EXPECT_NO_THROW(pool.validate());
  EXPECT_EQ(query("red", pool, p), 1);
  EXPECT_EQ(query("green", pool, p), 2);
  EXPECT_EQ(query("blue", pool, p), 3);
  const auto views = select_views(s.cloud, s.dataset.cameras, 2, 3);
  EXPECT_EQ(views.size(), 3u);
}

}  // namespace
}  // namespace dualsplat
