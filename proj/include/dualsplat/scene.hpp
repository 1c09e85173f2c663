// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Gaussian scene representation, cameras, and the per-primitive geometry
// shared by the forward and backward rasterizers.

#ifndef DUALSPLAT_SCENE_HPP_
#define DUALSPLAT_SCENE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualsplat/image.hpp"

namespace dualsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovarianceDilation = 0.3;
inline constexpr double kScreenSigmas = 3.0;
/// Squared Mahalanobis radius of a splat's support; matches the 3-sigma box.
inline constexpr double kSupportMahalanobis2 = kScreenSigmas * kScreenSigmas;
inline constexpr int kMaxShDegree = 3;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// ---------------------------------------------------------------------------
// Camera

/// Pinhole camera, world-to-camera rotation and translation, +z forward,
/// +y down. Pixel centers sit on integer coordinates.
struct Camera {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  Vec3 to_view(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }

  void validate() const {
    if (width < 1 || height < 1) throw std::invalid_argument("camera: resolution must be >= 1");
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("camera: focal lengths must be > 0");
    const double err = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= 1e-6)) throw std::invalid_argument("camera: rotation is not orthonormal");
  }

  /// Camera at `eye` looking at `target`; `up` is the world up direction.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                        int w, int h) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) right = forward.unitOrthogonal();
    right.normalize();
    const Vec3 down = forward.cross(right);
    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * (w - 1);
    cam.cy = 0.5 * (h - 1);
    cam.width = w;
    cam.height = h;
    return cam;
  }
};

// ---------------------------------------------------------------------------
// Gaussian cloud

enum class ParamBlock { kPosition, kSh, kOpacity, kInstanceOpacity, kRotation, kLogScale };
inline constexpr std::array<ParamBlock, 6> kAllParamBlocks = {
    ParamBlock::kPosition, ParamBlock::kSh,       ParamBlock::kOpacity,
    ParamBlock::kInstanceOpacity, ParamBlock::kRotation, ParamBlock::kLogScale};

inline const char* block_name(ParamBlock b) {
  switch (b) {
    case ParamBlock::kPosition: return "position";
    case ParamBlock::kSh: return "sh";
    case ParamBlock::kOpacity: return "opacity";
    case ParamBlock::kInstanceOpacity: return "instance_opacity";
    case ParamBlock::kRotation: return "rotation";
    case ParamBlock::kLogScale: return "log_scale";
  }
  return "?";
}

/// Values per primitive for each parameter block.
inline int block_width(ParamBlock b, int sh_degree) {
  switch (b) {
    case ParamBlock::kPosition: return 3;
    case ParamBlock::kSh: return 3 * sh_coeff_count(sh_degree);
    case ParamBlock::kOpacity: return 1;
    case ParamBlock::kInstanceOpacity: return 1;
    case ParamBlock::kRotation: return 4;
    case ParamBlock::kLogScale: return 3;
  }
  return 0;
}

/// Structure-of-arrays Gaussian primitives. Parameters are stored in single
/// precision (the checkpoint format); all rendering math runs in double.
///
/// SH layout: sh_coeffs[(i * K + k) * 3 + channel], K = (degree + 1)^2.
/// Rotations are (w, x, y, z) quaternions.
struct GaussianCloud {
  int sh_degree = 0;
  /// C; labels live in {0..C}.
  int object_count = 0;
  /// False until labels and instance opacities have been initialized.
  bool instance_ready = false;

  std::vector<float> positions;
  std::vector<float> sh_coeffs;
  std::vector<float> opacity_logits;
  std::vector<float> instance_opacity_logits;
  std::vector<float> rotations;
  std::vector<float> log_scales;
  std::vector<std::int32_t> labels;

  std::size_t size() const { return opacity_logits.size(); }
  int sh_count() const { return sh_coeff_count(sh_degree); }

  void resize(std::size_t n) {
    positions.resize(3 * n, 0.0f);
    sh_coeffs.resize(3 * static_cast<std::size_t>(sh_count()) * n, 0.0f);
    opacity_logits.resize(n, 0.0f);
    instance_opacity_logits.resize(n, 0.0f);
    rotations.resize(4 * n, 0.0f);
    log_scales.resize(3 * n, 0.0f);
    labels.resize(n, 0);
  }

  std::span<float> block(ParamBlock b) {
    switch (b) {
      case ParamBlock::kPosition: return positions;
      case ParamBlock::kSh: return sh_coeffs;
      case ParamBlock::kOpacity: return opacity_logits;
      case ParamBlock::kInstanceOpacity: return instance_opacity_logits;
      case ParamBlock::kRotation: return rotations;
      case ParamBlock::kLogScale: return log_scales;
    }
    return {};
  }
  std::span<const float> block(ParamBlock b) const {
    return const_cast<GaussianCloud*>(this)->block(b);
  }

  Vec3 position(std::size_t i) const {
    return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]};
  }
  Vec4 rotation(std::size_t i) const {
    return {rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]};
  }
  Vec3 log_scale(std::size_t i) const {
    return {log_scales[3 * i], log_scales[3 * i + 1], log_scales[3 * i + 2]};
  }
  double opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }
  double instance_opacity(std::size_t i) const { return sigmoid(instance_opacity_logits[i]); }
  std::span<const float> sh(std::size_t i) const {
    const std::size_t w = 3 * static_cast<std::size_t>(sh_count());
    return std::span<const float>(sh_coeffs).subspan(i * w, w);
  }

  /// Throws std::invalid_argument if any structural invariant is broken.
  void validate() const {
    const std::size_t n = size();
    const auto check = [&](std::size_t got, std::size_t want, const char* what) {
      if (got != want) {
        throw std::invalid_argument(std::string("gaussian cloud: ") + what + " has " +
                                    std::to_string(got) + " values, expected " +
                                    std::to_string(want));
      }
    };
    if (sh_degree < 0 || sh_degree > kMaxShDegree) {
      throw std::invalid_argument("gaussian cloud: SH degree must be in [0,3]");
    }
    check(positions.size(), 3 * n, "positions");
    check(sh_coeffs.size(), 3 * static_cast<std::size_t>(sh_count()) * n, "sh_coeffs");
    check(instance_opacity_logits.size(), n, "instance_opacity_logits");
    check(rotations.size(), 4 * n, "rotations");
    check(log_scales.size(), 3 * n, "log_scales");
    check(labels.size(), n, "labels");
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] < 0 || labels[i] > object_count) {
        throw std::invalid_argument("gaussian cloud: label " + std::to_string(labels[i]) +
                                    " outside {0.." + std::to_string(object_count) + "}");
      }
    }
  }
};

/// Renormalizes every stored quaternion (in double, then stored).
inline void normalize_rotations(GaussianCloud& cloud) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Vec4 q = cloud.rotation(i);
    const double n = q.norm();
    q = n > 0.0 ? Vec4(q / n) : Vec4(1, 0, 0, 0);
    for (int k = 0; k < 4; ++k) cloud.rotations[4 * i + k] = static_cast<float>(q[k]);
  }
}

// ---------------------------------------------------------------------------
// Covariance

inline Mat3 quaternion_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

inline Vec4 normalized_quaternion(const Vec4& q) {
  const double n = q.norm();
  return n > 0.0 ? Vec4(q / n) : Vec4(1, 0, 0, 0);
}

/// Sigma = R diag(exp(2 log_scale)) R^T. The quaternion is renormalized.
inline Mat3 build_covariance(const Vec4& rotation, const Vec3& log_scale) {
  const Mat3 r = quaternion_to_rotation(normalized_quaternion(rotation));
  const Vec3 s = log_scale.array().exp();
  const Mat3 m = r * s.asDiagonal();
  return m * m.transpose();
}

// ---------------------------------------------------------------------------
// Spherical harmonics

namespace sh {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2 = {1.0925484305920792, -1.0925484305920792,
                                              0.31539156525252005, -1.0925484305920792,
                                              0.5462742152960396};
inline constexpr std::array<double, 7> kC3 = {
    -0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
    -0.4570457994644658, 1.445305721320277, -0.5900435899266435};

/// Real SH basis values (3DGS sign convention) and their gradients with
/// respect to the unit direction components.
struct Basis {
  std::array<double, 16> value{};
  std::array<Vec3, 16> grad{};
};

inline Basis evaluate_basis(int degree, const Vec3& dir) {
  Basis b;
  const double x = dir.x(), y = dir.y(), z = dir.z();
  b.value[0] = kC0;
  b.grad[0] = Vec3::Zero();
  if (degree < 1) return b;
  b.value[1] = -kC1 * y;
  b.grad[1] = Vec3(0, -kC1, 0);
  b.value[2] = kC1 * z;
  b.grad[2] = Vec3(0, 0, kC1);
  b.value[3] = -kC1 * x;
  b.grad[3] = Vec3(-kC1, 0, 0);
  if (degree < 2) return b;
  const double xx = x * x, yy = y * y, zz = z * z;
  b.value[4] = kC2[0] * x * y;
  b.grad[4] = kC2[0] * Vec3(y, x, 0);
  b.value[5] = kC2[1] * y * z;
  b.grad[5] = kC2[1] * Vec3(0, z, y);
  b.value[6] = kC2[2] * (2 * zz - xx - yy);
  b.grad[6] = kC2[2] * Vec3(-2 * x, -2 * y, 4 * z);
  b.value[7] = kC2[3] * x * z;
  b.grad[7] = kC2[3] * Vec3(z, 0, x);
  b.value[8] = kC2[4] * (xx - yy);
  b.grad[8] = kC2[4] * Vec3(2 * x, -2 * y, 0);
  if (degree < 3) return b;
  b.value[9] = kC3[0] * y * (3 * xx - yy);
  b.grad[9] = kC3[0] * Vec3(6 * x * y, 3 * xx - 3 * yy, 0);
  b.value[10] = kC3[1] * x * y * z;
  b.grad[10] = kC3[1] * Vec3(y * z, x * z, x * y);
  b.value[11] = kC3[2] * y * (4 * zz - xx - yy);
  b.grad[11] = kC3[2] * Vec3(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
  b.value[12] = kC3[3] * z * (2 * zz - 3 * xx - 3 * yy);
  b.grad[12] = kC3[3] * Vec3(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
  b.value[13] = kC3[4] * x * (4 * zz - xx - yy);
  b.grad[13] = kC3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
  b.value[14] = kC3[5] * z * (xx - yy);
  b.grad[14] = kC3[5] * Vec3(2 * x * z, -2 * y * z, xx - yy);
  b.value[15] = kC3[6] * x * (xx - 3 * yy);
  b.grad[15] = kC3[6] * Vec3(3 * xx - 3 * yy, -6 * x * y, 0);
  return b;
}
}  // namespace sh

/// Per-channel flags recording which color channels hit the [0,1] clamp.
using ClampFlags = std::array<bool, 3>;

/// Evaluates view-dependent RGB: basis . coeffs + 0.5, clamped to [0,1].
inline Vec3 eval_sh_color(std::span<const float> coeffs, int degree, const Vec3& view_dir,
                          ClampFlags* clamped = nullptr) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw std::invalid_argument("eval_sh_color: degree must be in [0,3]");
  }
  const sh::Basis basis = sh::evaluate_basis(degree, view_dir);
  const int k_count = sh_coeff_count(degree);
  Vec3 rgb = Vec3::Constant(0.5);
  for (int k = 0; k < k_count; ++k) {
    for (int ch = 0; ch < 3; ++ch) rgb[ch] += basis.value[k] * coeffs[3 * k + ch];
  }
  for (int ch = 0; ch < 3; ++ch) {
    const bool lo = rgb[ch] < 0.0, hi = rgb[ch] > 1.0;
    if (clamped) (*clamped)[ch] = lo || hi;
    rgb[ch] = std::clamp(rgb[ch], 0.0, 1.0);
  }
  return rgb;
}

/// DC coefficient value producing `rgb` for degree-0 evaluation.
inline double rgb_to_dc(double rgb) { return (rgb - 0.5) / sh::kC0; }

// ---------------------------------------------------------------------------
// Projection

/// A Gaussian after projection into one view.
struct ProjectedGaussian {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  /// Inverse of cov2d.
  Mat2 conic = Mat2::Identity();
  double depth = 0.0;
  /// 3-sigma extent of cov2d in pixels.
  double screen_radius = 0.0;
  Vec3 color = Vec3::Zero();
  ClampFlags color_clamped{};
  double opacity = 0.0;
  double instance_opacity = 0.0;
  std::int32_t label = 0;
  std::uint32_t source_index = 0;
};

/// Camera-space Jacobian of the perspective projection at view point t.
inline Mat23 projection_jacobian(const Camera& cam, const Vec3& t) {
  const double iz = 1.0 / t.z(), iz2 = iz * iz;
  Mat23 j;
  j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz2, 0.0, cam.fy * iz, -cam.fy * t.y() * iz2;
  return j;
}

/// Screen-space covariance before the dilation term is added.
inline Mat2 project_covariance(const Mat3& cov3d, const Camera& cam, const Vec3& t) {
  const Mat23 jw = projection_jacobian(cam, t) * cam.rotation;
  return jw * cov3d * jw.transpose();
}

/// Projects primitive i; returns nullopt when it is culled (behind the near
/// plane, or the 3-sigma box misses every pixel center).
inline std::optional<ProjectedGaussian> project_gaussian(const GaussianCloud& cloud,
                                                         std::size_t i, const Camera& cam) {
  const Vec3 mu = cloud.position(i);
  const Vec3 t = cam.to_view(mu);
  if (!(t.z() > kNearPlane)) return std::nullopt;

  ProjectedGaussian pg;
  pg.depth = t.z();
  pg.mean2d = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
  const Mat3 cov3d = build_covariance(cloud.rotation(i), cloud.log_scale(i));
  pg.cov2d = project_covariance(cov3d, cam, t) + kCovarianceDilation * Mat2::Identity();
  const double det = pg.cov2d.determinant();
  if (!(det > 0.0)) return std::nullopt;
  pg.conic = pg.cov2d.inverse();

  const double mid = 0.5 * (pg.cov2d(0, 0) + pg.cov2d(1, 1));
  const double lambda_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
  pg.screen_radius = kScreenSigmas * std::sqrt(lambda_max);
  if (pg.mean2d.x() + pg.screen_radius < 0.0 ||
      pg.mean2d.x() - pg.screen_radius > cam.width - 1 ||
      pg.mean2d.y() + pg.screen_radius < 0.0 ||
      pg.mean2d.y() - pg.screen_radius > cam.height - 1) {
    return std::nullopt;
  }

  const Vec3 dir = (mu - cam.center()).normalized();
  pg.color = eval_sh_color(cloud.sh(i), cloud.sh_degree, dir, &pg.color_clamped);
  pg.opacity = cloud.opacity(i);
  pg.instance_opacity = cloud.instance_opacity(i);
  pg.label = cloud.labels[i];
  pg.source_index = static_cast<std::uint32_t>(i);
  return pg;
}

/// exp(-1/2 d^T cov2d^-1 d), d = v - mean2d.
inline double eval_gaussian_2d(const ProjectedGaussian& pg, const Vec2& v) {
  const Vec2 d = v - pg.mean2d;
  return std::exp(-0.5 * d.dot(pg.conic * d));
}

/// Gaussian value at v, or nullopt outside the splat's 3-sigma support.
inline std::optional<double> splat_support_value(const ProjectedGaussian& pg, const Vec2& v) {
  const Vec2 d = v - pg.mean2d;
  const double m2 = d.dot(pg.conic * d);
  if (!(m2 <= kSupportMahalanobis2)) return std::nullopt;
  return std::exp(-0.5 * m2);
}

}  // namespace dualsplat

#endif  // DUALSPLAT_SCENE_HPP_
