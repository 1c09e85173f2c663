// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <set>

#include "dualsplat/labeling.hpp"
#include "dualsplat/oracle.hpp"
#include "dualsplat/synth.hpp"

namespace dualsplat {
namespace {

SceneSpec small_spec(int floaters = 0) {
  SceneSpec s;
  s.gaussians_per_object = 50;
  s.floaters = floaters;
  s.views = 8;
  s.width = s.height = 40;
  return s;
}

TEST(GenerateScene, CountsAndLabels) {
  const SyntheticScene s = generate_scene(small_spec());
  EXPECT_EQ(s.cloud.size(), 150u);
  EXPECT_EQ(std::set<int>(s.cloud.labels.begin(), s.cloud.labels.end()), std::set<int>({1, 2, 3}));
  EXPECT_TRUE(s.floater_indices.empty());
  EXPECT_EQ(s.dataset.images.size(), 8u);
  EXPECT_EQ(s.dataset.eval_views, std::vector<int>({3, 7}));
  EXPECT_EQ(s.dataset.train_views.size(), 6u);
  EXPECT_NO_THROW(s.dataset.validate());
  EXPECT_NO_THROW(s.pseudo_labels.validate());
}

TEST(GenerateScene, FloatersAreFlaggedFaintAndWronglyStamped) {
  const SyntheticScene s = generate_scene(small_spec(5));
  ASSERT_EQ(s.floater_indices.size(), 5u);
  EXPECT_EQ(s.floater_labels.size(), 5u);
  for (std::size_t f = 0; f < 5; ++f) {
    const std::size_t i = s.floater_indices[f];
    EXPECT_LT(i, s.cloud.size());
    EXPECT_EQ(s.cloud.labels[i], 0);
    EXPECT_GE(s.cloud.opacity(i), 0.05 - 1e-6);
    EXPECT_LE(s.cloud.opacity(i), 0.2 + 1e-6);
    EXPECT_GE(s.floater_labels[f], 1);
    EXPECT_LE(s.floater_labels[f], 3);
  }
  // Supervision differs from the clean maps only around floater centers.
  std::size_t changed = 0;
  for (std::size_t v = 0; v < s.pseudo_labels.maps.size(); ++v) {
    for (std::size_t k = 0; k < s.true_id_maps[v].values.size(); ++k) {
      changed += s.pseudo_labels.maps[v].values[k] != s.true_id_maps[v].values[k];
    }
  }
  EXPECT_GT(changed, 0u);
  EXPECT_LE(changed, 5u * 8u * 9u);
}

TEST(GenerateScene, DeterministicPerSeed) {
  const SyntheticScene a = generate_scene(small_spec(2));
  const SyntheticScene b = generate_scene(small_spec(2));
  SceneSpec other = small_spec(2);
  other.seed = 2;
  const SyntheticScene c = generate_scene(other);
  EXPECT_EQ(a.cloud.positions, b.cloud.positions);
  EXPECT_EQ(a.dataset.images[3].values, b.dataset.images[3].values);
  EXPECT_EQ(a.pseudo_labels.maps[5].values, b.pseudo_labels.maps[5].values);
  EXPECT_NE(a.cloud.positions, c.cloud.positions);
}

TEST(GenerateScene, IdMapsComeFromTheOracle) {
  SceneSpec spec = small_spec();
  spec.id_maps = IdMapSource::kInstanceMap;
  const SyntheticScene s = generate_scene(spec);
  for (int v : {0, 5}) {
    const RenderOutput r = oracle_render(s.cloud, s.dataset.cameras[v], {1, 2, 3});
    EXPECT_EQ(s.pseudo_labels.maps[v].values, r.instance_labels.values);
    EXPECT_EQ(s.dataset.images[v].values, r.color.values);
  }
  const SyntheticScene o = generate_scene(small_spec());
  for (std::size_t k = 0; k < o.true_id_maps[2].values.size(); ++k) {
    const int id = o.true_id_maps[2].values[k];
    if (id > 0) {
      EXPECT_GT(o.true_occupancy[2][id - 1].values[k], 0.5);
    }
  }
}

TEST(GenerateScene, RevotedLabelsRecoverTruth) {
  const SyntheticScene s = generate_scene(small_spec());
  const auto voted = majority_vote(s.cloud, s.dataset.cameras, s.pseudo_labels);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < voted.size(); ++i) agree += voted[i] == s.cloud.labels[i];
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(voted.size()), 0.95);
}

TEST(GenerateScene, TrueMasksAreNonEmpty) {
  const SyntheticScene s = generate_scene(small_spec());
  for (int j = 1; j <= 3; ++j) {
    std::size_t area = 0;
    for (int v = 0; v < 8; ++v) {
      for (auto b : s.true_mask(v, j).values) area += b;
    }
    EXPECT_GT(area, 100u) << j;
  }
}

TEST(GenerateScene, RejectsBadSpecs) {
  SceneSpec s = small_spec();
  s.objects = 0;
  EXPECT_THROW(generate_scene(s), std::invalid_argument);
  s = small_spec();
  s.floaters = -1;
  EXPECT_THROW(generate_scene(s), std::invalid_argument);
  s = small_spec();
  s.floater_opacity_min = 0.3;
  EXPECT_THROW(generate_scene(s), std::invalid_argument);
}

TEST(CameraRing, LooksAtOrigin) {
  const auto cams = camera_ring(small_spec());
  ASSERT_EQ(cams.size(), 8u);
  for (const Camera& c : cams) {
    const Vec3 o = c.to_view(Vec3::Zero());
    EXPECT_NEAR(o.x(), 0.0, 1e-9);
    EXPECT_NEAR(o.y(), 0.0, 1e-9);
    EXPECT_GT(o.z(), 0.0);
    EXPECT_EQ(c.fx, 60.0);
  }
}

TEST(InitialCloud, KeepsStructureDropsLabels) {
  const SyntheticScene s = generate_scene(small_spec(1));
  const GaussianCloud c = initial_cloud(s, 4);
  EXPECT_EQ(c.size(), s.cloud.size());
  EXPECT_FALSE(c.instance_ready);
  for (auto l : c.labels) EXPECT_EQ(l, 0);
  EXPECT_NEAR(c.opacity(0), 0.1, 1e-6);
  EXPECT_NO_THROW(c.validate());
  const GaussianCloud d = initial_cloud(s, 4);
  EXPECT_EQ(c.positions, d.positions);
}

}  // namespace
}  // namespace dualsplat
