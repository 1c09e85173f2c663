// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "dualsplat/scene.hpp"
#include "test_util.hpp"

namespace dualsplat {
namespace {

TEST(Scene, CovarianceIsSymmetricPositiveDefiniteAndMatchesRsSR) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec4 q = Vec4(n(rng), n(rng), n(rng), n(rng));
    const Vec3 ls(n(rng), n(rng), n(rng));
    const Mat3 cov = build_covariance(q, ls);
    EXPECT_LT((cov - cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
    // Independent reference through Eigen's quaternion.
    const Eigen::Quaterniond eq(q[0], q[1], q[2], q[3]);
    const Mat3 r = eq.normalized().toRotationMatrix();
    const Mat3 s = ls.array().exp().matrix().asDiagonal();
    const Mat3 ref = r * s * s * r.transpose();
    EXPECT_LT((cov - ref).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + ref.cwiseAbs().maxCoeff()));
  }
}

TEST(Scene, QuaternionToRotationIsOrthonormal) {
  const Mat3 r = quaternion_to_rotation(normalized_quaternion(Vec4(0.3, -0.2, 0.9, 0.1)));
  EXPECT_LT((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
}

TEST(Scene, DegreeZeroColorIsOffsetDc) {
  GaussianCloud c;
  c.resize(1);
  c.sh_coeffs = {0.2f, -0.4f, 0.0f};
  const Vec3 rgb = eval_sh_color(c.sh(0), 0, Vec3(0, 0, 1), nullptr);
  EXPECT_NEAR(rgb.x(), 0.5 + sh::kC0 * 0.2f, 1e-12);
  EXPECT_NEAR(rgb.y(), 0.5 + sh::kC0 * -0.4f, 1e-12);
  EXPECT_NEAR(rgb.z(), 0.5, 1e-12);
  EXPECT_NEAR(rgb_to_dc(0.5 + sh::kC0 * 0.25), 0.25, 1e-12);
}

TEST(Scene, ColorClampsAtZero) {
  GaussianCloud c;
  c.resize(1);
  c.sh_coeffs = {-5.0f, 0.0f, 0.0f};
  ClampFlags flags{};
  const Vec3 rgb = eval_sh_color(c.sh(0), 0, Vec3(0, 0, 1), &flags);
  EXPECT_EQ(rgb.x(), 0.0);
  EXPECT_TRUE(flags[0]);
  EXPECT_FALSE(flags[1]);
}

TEST(Scene, ShBasisGradientMatchesFiniteDifference) {
  const Vec3 d = Vec3(0.3, -0.5, 0.8).normalized();
  const sh::Basis b = sh::evaluate_basis(3, d);
  const double h = 1e-6;
  for (int a = 0; a < 3; ++a) {
    Vec3 dp = d, dm = d;
    dp[a] += h;
    dm[a] -= h;
    const sh::Basis bp = sh::evaluate_basis(3, dp);
    const sh::Basis bm = sh::evaluate_basis(3, dm);
    for (int k = 0; k < 16; ++k) {
      EXPECT_NEAR(b.grad[k][a], (bp.value[k] - bm.value[k]) / (2 * h), 1e-6) << "k=" << k << " axis=" << a;
    }
  }
}

TEST(Scene, ProjectionMatchesPinhole) {
  GaussianCloud c;
  c.resize(1);
  c.positions = {0.5f, -0.25f, 2.0f};
  c.log_scales = {-3.0f, -3.0f, -3.0f};
  const Camera cam = testing::front_camera(32, 32);
  const auto pg = project_gaussian(c, 0, cam);
  ASSERT_TRUE(pg.has_value());
  EXPECT_NEAR(pg->mean2d.x(), 32.0 * 0.5 / 2.0 + 15.5, 1e-9);
  EXPECT_NEAR(pg->mean2d.y(), 32.0 * -0.25 / 2.0 + 15.5, 1e-9);
  EXPECT_NEAR(pg->depth, 2.0, 1e-9);
  // Dilation keeps the footprint at least 0.3 px^2 per axis.
  EXPECT_GE(pg->cov2d(0, 0), kCovarianceDilation);
}

TEST(Scene, CullsBehindCameraAndOffscreen) {
  GaussianCloud c;
  c.resize(2);
  c.positions = {0.0f, 0.0f, -1.0f, 100.0f, 0.0f, 2.0f};
  c.log_scales.assign(6, -3.0f);
  const Camera cam = testing::front_camera(16, 16);
  EXPECT_FALSE(project_gaussian(c, 0, cam).has_value());
  EXPECT_FALSE(project_gaussian(c, 1, cam).has_value());
}

TEST(Scene, SupportCutoffAtThreeSigma) {
  ProjectedGaussian pg;
  pg.conic = Mat2::Identity();
  EXPECT_TRUE(splat_support_value(pg, Vec2(3.0, 0.0)).has_value());
  EXPECT_FALSE(splat_support_value(pg, Vec2(3.0001, 0.0)).has_value());
  EXPECT_NEAR(*splat_support_value(pg, Vec2(1.0, 0.0)), std::exp(-0.5), 1e-15);
}

TEST(Scene, ValidateRejectsBadLabelsAndSizes) {
  std::mt19937_64 rng(1);
  GaussianCloud c = testing::random_cloud(rng, {});
  EXPECT_NO_THROW(c.validate());
  c.labels[0] = c.object_count + 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.labels[0] = 0;
  c.rotations.pop_back();
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Scene, BlockSpansCoverEachParameter) {
  std::mt19937_64 rng(2);
  GaussianCloud c = testing::random_cloud(rng, {.count = 7, .sh_degree = 2});
  for (ParamBlock b : kAllParamBlocks) {
    EXPECT_EQ(c.block(b).size(), c.size() * static_cast<std::size_t>(block_width(b, c.sh_degree))) << block_name(b);
  }
}

TEST(Scene, LookAtProducesValidCamera) {
  const Camera cam = Camera::look_at(Vec3(3, 0, 1), Vec3::Zero(), Vec3::UnitZ(), 50.0, 40, 30);
  EXPECT_NO_THROW(cam.validate());
  EXPECT_LT((cam.center() - Vec3(3, 0, 1)).norm(), 1e-12);
  EXPECT_GT(cam.to_view(Vec3::Zero()).z(), 0.0);
}

TEST(Scene, SigmoidLogitRoundTrip) {
  for (double p : {0.01, 0.3, 0.5, 0.99}) EXPECT_NEAR(sigmoid(logit(p)), p, 1e-14);
}

}  // namespace
}  // namespace dualsplat
