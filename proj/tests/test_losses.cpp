// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dualsplat/losses.hpp"
#include "dualsplat/raster.hpp"
#include "ssim_reference.hpp"
#include "test_util.hpp"

namespace dualsplat {
namespace {

ImageBuffer random_image(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBuffer img(w, h, c);
  for (double& v : img.values) v = u(rng);
  return img;
}

TEST(L1, IdenticalIsZeroAndOppositeIsOne) {
  ImageBuffer a(4, 3, 3), b(4, 3, 3);
  EXPECT_EQ(l1_loss(a, a), 0.0);
  for (double& v : b.values) v = 1.0;
  EXPECT_EQ(l1_loss(a, b), 1.0);
}

TEST(L1, MatchesScalarLoopAndGradient) {
  std::mt19937_64 rng(1);
  const ImageBuffer a = random_image(rng, 7, 5, 3), b = random_image(rng, 7, 5, 3);
  double s = 0.0;
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 7; ++x) {
      for (int c = 0; c < 3; ++c) s += std::fabs(a.at(x, y, c) - b.at(x, y, c));
    }
  }
  const LossAndGrad lg = l1_loss_grad(a, b);
  EXPECT_NEAR(lg.value, s / 105.0, 1e-15);
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    EXPECT_EQ(lg.grad.values[k], (a.values[k] > b.values[k] ? 1.0 : -1.0) / 105.0);
  }
}

TEST(L1, RejectsShapeMismatch) {
  EXPECT_THROW(l1_loss(ImageBuffer(3, 3, 3), ImageBuffer(3, 4, 3)), std::invalid_argument);
}

TEST(Ssim, IdenticalImagesGiveZero) {
  std::mt19937_64 rng(2);
  const ImageBuffer a = random_image(rng, 16, 16, 3);
  EXPECT_NEAR(ssim_loss(a, a), 0.0, 1e-12);
}

TEST(Ssim, StructuredNoiseIsPositive) {
  std::mt19937_64 rng(3);
  ImageBuffer a(16, 16, 1), b(16, 16, 1);
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    a.values[k] = 0.5;
    b.values[k] = 0.5 + 0.1 * ((k % 2) ? 1 : -1);
  }
  EXPECT_GT(ssim_loss(a, b), 0.0);
}

TEST(Ssim, MatchesDirectReference) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    const ImageBuffer a = random_image(rng, 16, 16, 3), b = random_image(rng, 16, 16, 3);
    EXPECT_NEAR(ssim_loss(a, b), 1.0 - testing::reference_ssim(a, b), 1e-6);
  }
}

TEST(Ssim, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(5);
  const ImageBuffer a = random_image(rng, 14, 13, 3), b = random_image(rng, 14, 13, 3);
  const LossAndGrad lg = ssim_loss_grad(a, b);
  const double h = 1e-6;
  for (std::size_t k = 0; k < a.values.size(); k += 7) {
    ImageBuffer p = a, m = a;
    p.values[k] += h;
    m.values[k] -= h;
    const double fd = (ssim_loss(p, b) - ssim_loss(m, b)) / (2 * h);
    EXPECT_NEAR(lg.grad.values[k], fd, 1e-7 + 1e-5 * std::fabs(fd)) << k;
  }
}

TEST(Ssim, RejectsSmallImages) {
  EXPECT_THROW(ssim_loss(ImageBuffer(10, 16, 3), ImageBuffer(10, 16, 3)), std::invalid_argument);
}

TEST(ObjectCe, UniformHalfIsLn2) {
  ImageBuffer s(8, 8, 1);
  for (double& v : s.values) v = 0.5;
  BinaryMask m(8, 8, 1);
  for (std::size_t k = 0; k < m.values.size(); k += 3) m.values[k] = 1;
  EXPECT_NEAR(object_ce_loss(s, m), std::log(2.0), 1e-9);
}

TEST(ObjectCe, SaturatedCorrectPredictionIsNearZero) {
  ImageBuffer s(4, 4, 1);
  BinaryMask m(4, 4, 1);
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    m.values[k] = k % 2;
    s.values[k] = m.values[k] ? 1.0 - kCeEpsilon : kCeEpsilon;
  }
  EXPECT_NEAR(object_ce_loss(s, m), -std::log(1.0 - kCeEpsilon), 1e-12);
}

TEST(ObjectCe, MatchesScalarOracleAndGradientSign) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.2, 1.3);
  ImageBuffer s(9, 7, 1);
  BinaryMask m(9, 7, 1);
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    s.values[k] = u(rng);
    m.values[k] = rng() % 2;
  }
  double ref = 0.0;
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    const double c = std::min(std::max(s.values[k], 1e-6), 1.0 - 1e-6);
    ref += m.values[k] ? -std::log(c) : -std::log(1.0 - c);
  }
  const LossAndGrad lg = object_ce_loss_grad(s, m);
  EXPECT_NEAR(lg.value, ref / 63.0, 1e-9);
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    const double c = std::min(std::max(s.values[k], 1e-6), 1.0 - 1e-6);
    if (c != s.values[k]) {
      EXPECT_EQ(lg.grad.values[k], 0.0);
    } else {
      EXPECT_EQ(lg.grad.values[k] >= 0.0, c >= m.values[k]);
    }
  }
}

TEST(SampleObjects, FewerThanMReturnsAllPresent) {
  IdMap ids(4, 4, 1);
  ids.values[3] = 4;
  std::mt19937_64 rng(1);
  EXPECT_EQ(sample_objects(ids, 3, rng), std::vector<int>({4}));
  ids.values[5] = 1;
  ids.values[6] = 2;
  ids.values[7] = 3;
  ids.values[3] = 0;
  EXPECT_EQ(sample_objects(ids, 3, rng), std::vector<int>({1, 2, 3}));
  EXPECT_TRUE(sample_objects(IdMap(2, 2, 1), 2, rng).empty());
  EXPECT_THROW(sample_objects(ids, 0, rng), std::invalid_argument);
}

TEST(SampleObjects, UniformOverTenThousandDraws) {
  IdMap ids(4, 1, 1);
  ids.values = {1, 2, 3, 4};
  std::mt19937_64 rng(12345);
  std::map<int, int> counts;
  for (int k = 0; k < 10000; ++k) ++counts[sample_objects(ids, 1, rng).front()];
  for (int j = 1; j <= 4; ++j) {
    EXPECT_GE(counts[j] / 10000.0, 0.24) << j;
    EXPECT_LE(counts[j] / 10000.0, 0.26) << j;
  }
}

TEST(SampleObjects, DeterministicGivenSeed) {
  IdMap ids(5, 1, 1);
  ids.values = {1, 2, 3, 4, 5};
  std::mt19937_64 a(9), b(9);
  for (int k = 0; k < 20; ++k) EXPECT_EQ(sample_objects(ids, 2, a), sample_objects(ids, 2, b));
}

TEST(RandomObjectLoss, AveragesPerObjectTerms) {
  std::mt19937_64 rng(7);
  GaussianCloud c = testing::random_cloud(rng, {.count = 80});
  const Camera cam = testing::front_camera(32, 32);
  IdMap ids(32, 32, 1);
  for (std::size_t k = 0; k < ids.values.size(); ++k) ids.values[k] = static_cast<int>(k % 4);
  const OccupancyRenderFn fn = [](const GaussianCloud& g, const Camera& cm, const std::vector<int>& o) {
    return render(g, {cm, Vec3::Zero(), o});
  };
  std::mt19937_64 pick(3);
  const RandomObjectLoss r = random_object_loss(fn, c, cam, ids, 2, pick);
  ASSERT_EQ(r.object_ids.size(), 2u);
  const RenderOutput out = render(c, {cam, Vec3::Zero(), {1, 2, 3}});
  double expect = 0.0;
  for (int j : r.object_ids) expect += object_ce_loss(out.occupancy.at(j), object_mask(ids, j));
  EXPECT_NEAR(r.value, expect / 2.0, 1e-12);

  std::mt19937_64 pick1(3);
  const RandomObjectLoss one = random_object_loss(fn, c, cam, ids, 1, pick1);
  EXPECT_NEAR(one.value, object_ce_loss(out.occupancy.at(one.object_ids[0]), object_mask(ids, one.object_ids[0])),
              1e-12);
  EXPECT_EQ(random_object_loss(fn, c, cam, IdMap(32, 32, 1), 2, pick1).value, 0.0);
}

TEST(TotalLoss, WeightedSumPerStage) {
  LossWeights w;
  EXPECT_EQ(w.lambda_o, 0.1);
  EXPECT_EQ(w.lambda_ssim, 0.2);
  EXPECT_EQ(total_loss(0.5, 0.25, 1.0, w, Stage::kInstance), 0.5 + 0.2 * 0.25 + 0.1 * 1.0);
  EXPECT_NEAR(total_loss(0.5, 0.25, 1.0, w, Stage::kInstance), 0.65, 1e-15);
  EXPECT_EQ(total_loss(0.5, 0.25, 1.0, w, Stage::kAppearance), 0.5 + 0.2 * 0.25);
  EXPECT_EQ(total_loss(0.5, 0.25, 0.0, w, Stage::kInstance), total_loss(0.5, 0.25, 0.0, w, Stage::kAppearance));
}

}  // namespace
}  // namespace dualsplat
