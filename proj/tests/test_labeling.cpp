// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "dualsplat/labeling.hpp"
#include "test_util.hpp"
#include "vote_oracle.hpp"

namespace dualsplat {
namespace {

TEST(ProjectAndRead, ReadsNearestPixel) {
  const Camera cam = testing::front_camera(5, 5);
  IdMap ids(5, 5, 1);
  ids.at(3, 1) = 7;
  // Projects to (3.4, 1.1), nearest pixel (3, 1).
  EXPECT_EQ(project_and_read(Vec3(0.28, -0.18, 1.0), cam, ids), 7);
  EXPECT_EQ(project_and_read(Vec3(0.0, 0.0, -1.0), cam, ids), std::nullopt);
  EXPECT_EQ(project_and_read(Vec3(5.0, 0.0, 1.0), cam, ids), std::nullopt);
  EXPECT_THROW(project_and_read(Vec3(0, 0, 1), cam, IdMap(4, 5, 1)), std::invalid_argument);
}

TEST(VoteTally, TiesGoToSmallestId) {
  VoteTally t;
  t.histogram = {1, 3, 3, 0};
  EXPECT_EQ(t.winner(), 1);
  t.histogram = {2, 1, 2};
  EXPECT_EQ(t.winner(), 0);
  t.histogram = {0, 0, 0};
  EXPECT_EQ(t.winner(), 0);
}

TEST(MajorityVote, MatchesBruteForceOracle) {
  std::mt19937_64 rng(21);
  for (int s = 0; s < 5; ++s) {
    const auto vc = testing::random_vote_case(rng);
    EXPECT_EQ(majority_vote(vc.cloud, vc.cameras, vc.labels),
              testing::brute_force_vote(vc.cloud, vc.cameras, vc.labels));
  }
}

TEST(MajorityVote, InvariantToViewOrder) {
  std::mt19937_64 rng(22);
  auto vc = testing::random_vote_case(rng);
  const auto ref = majority_vote(vc.cloud, vc.cameras, vc.labels);
  std::vector<std::size_t> perm(vc.cameras.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Camera> cams;
    PseudoLabelSet labels;
    labels.object_count = vc.labels.object_count;
    for (std::size_t k : perm) {
      cams.push_back(vc.cameras[k]);
      labels.maps.push_back(vc.labels.maps[k]);
    }
    EXPECT_EQ(majority_vote(vc.cloud, cams, labels), ref);
  }
}

TEST(MajorityVote, EquivariantUnderPrimitivePermutation) {
  std::mt19937_64 rng(23);
  const auto vc = testing::random_vote_case(rng, 120);
  const auto ref = majority_vote(vc.cloud, vc.cameras, vc.labels);
  std::vector<std::size_t> perm(vc.cloud.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  GaussianCloud shuffled;
  shuffled.resize(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    for (int a = 0; a < 3; ++a) shuffled.positions[3 * k + a] = vc.cloud.positions[3 * perm[k] + a];
  }
  const auto got = majority_vote(shuffled, vc.cameras, vc.labels);
  for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_EQ(got[k], ref[perm[k]]);
}

TEST(MajorityVote, UnseenPrimitiveGetsBackground) {
  GaussianCloud c;
  c.resize(1);
  c.positions = {0.0f, 0.0f, -3.0f};
  PseudoLabelSet labels{{IdMap(4, 4, 1)}, 2};
  std::fill(labels.maps[0].values.begin(), labels.maps[0].values.end(), 2);
  EXPECT_EQ(majority_vote(c, {testing::front_camera(4, 4)}, labels), std::vector<std::int32_t>({0}));
}

TEST(MajorityVote, RejectsBadInput) {
  GaussianCloud c;
  c.resize(1);
  c.positions = {0.0f, 0.0f, 2.0f};
  const Camera cam = testing::front_camera(4, 4);
  PseudoLabelSet labels{{IdMap(4, 4, 1)}, 1};
  EXPECT_THROW(majority_vote(c, {}, labels), std::invalid_argument);
  EXPECT_THROW(majority_vote(c, {cam, cam}, labels), std::invalid_argument);
  labels.maps[0].values.assign(16, 3);
  EXPECT_THROW(majority_vote(c, {cam}, labels), std::invalid_argument);
  EXPECT_THROW(labels.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace dualsplat
