// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic labeled scenes: opaque Gaussian blobs with distinct colors seen
// from a camera ring, optionally contaminated by faint floaters whose centers
// are stamped with a wrong object id in every ID map.

#ifndef DUALSPLAT_SYNTH_HPP_
#define DUALSPLAT_SYNTH_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "dualsplat/dataset.hpp"
#include "dualsplat/labeling.hpp"
#include "dualsplat/oracle.hpp"
#include "dualsplat/scene.hpp"

namespace dualsplat {

/// How supervision ID maps are derived from the true cloud.
enum class IdMapSource {
  /// argmax_j S_j where the largest occupancy exceeds 0.5, else 0.
  kOccupancy,
  /// The renderer's instance label map (argmax sigma* G with floor).
  kInstanceMap,
};

struct SceneSpec {
  int objects = 3;
  int gaussians_per_object = 500;
  int floaters = 0;
  std::uint64_t seed = 1;
  int views = 16;
  /// Every eval_stride-th view is held out for evaluation (0: none).
  int eval_stride = 4;
  int width = 128;
  int height = 128;
  /// Focal length in pixels; 0 picks 1.5 * width.
  double focal = 0.0;
  double ring_radius = 3.0;
  double ring_height = 1.2;
  double object_radius = 0.4;
  double layout_radius = 0.62;
  /// Surfel thickness relative to its tangent scale.
  double surfel_flatness = 0.1;
  double floater_opacity_min = 0.05;
  double floater_opacity_max = 0.2;
  double floater_scale = 0.12;
  /// Floater distance from its host object's center, in object radii.
  double floater_offset = 1.7;
  /// Radius in pixels of the wrong-id stamp around each floater center.
  double floater_stamp_radius = 1.0;
  IdMapSource id_maps = IdMapSource::kOccupancy;

  void validate() const {
    if (objects < 1 || gaussians_per_object < 1 || views < 1) {
      throw std::invalid_argument("scene spec: counts must be >= 1");
    }
    if (floaters < 0) throw std::invalid_argument("scene spec: floaters must be >= 0");
    if (width < 1 || height < 1) throw std::invalid_argument("scene spec: bad resolution");
    if (!(floater_opacity_min > 0.0 && floater_opacity_min <= floater_opacity_max &&
          floater_opacity_max < 1.0)) {
      throw std::invalid_argument("scene spec: floater opacity range must lie in (0,1)");
    }
    if (!(surfel_flatness > 0.0 && surfel_flatness <= 1.0)) {
      throw std::invalid_argument("scene spec: surfel_flatness must lie in (0,1]");
    }
  }
};

struct SyntheticScene {
  SceneSpec spec;
  /// Ground truth: true labels, instance opacity equal to opacity.
  GaussianCloud cloud;
  Dataset dataset;
  /// ID maps as supervision sees them (floater centers stamped).
  PseudoLabelSet pseudo_labels;
  /// Uncorrupted ID maps from the true labels.
  std::vector<IdMap> true_id_maps;
  /// true_occupancy[v][j - 1] = S_j(v) of the true cloud.
  std::vector<std::vector<ImageBuffer>> true_occupancy;
  std::vector<std::size_t> floater_indices;
  /// Wrong object id stamped for each floater.
  std::vector<int> floater_labels;

  int object_count() const { return cloud.object_count; }

  /// Ground-truth mask of object j in view v: true occupancy above 0.5.
  BinaryMask true_mask(int view, int object_id) const {
    const ImageBuffer& occ = true_occupancy.at(view).at(object_id - 1);
    BinaryMask m(occ.width, occ.height, 1);
    for (std::size_t k = 0; k < occ.values.size(); ++k) m.values[k] = occ.values[k] > 0.5;
    return m;
  }
};

inline Vec3 palette_color(int object_index) {
  static const std::array<Vec3, 8> colors = {Vec3(0.9, 0.15, 0.1), Vec3(0.1, 0.8, 0.2),
                                             Vec3(0.15, 0.25, 0.95), Vec3(0.95, 0.85, 0.1),
                                             Vec3(0.85, 0.2, 0.85), Vec3(0.1, 0.85, 0.85),
                                             Vec3(0.95, 0.55, 0.1), Vec3(0.6, 0.6, 0.6)};
  return colors[static_cast<std::size_t>(object_index) % colors.size()];
}

namespace detail {

inline void set_gaussian(GaussianCloud& c, std::size_t i, const Vec3& pos, const Vec3& log_scale,
                         const Vec4& rot, const Vec3& rgb, double opacity, int label) {
  for (int k = 0; k < 3; ++k) {
    c.positions[3 * i + k] = static_cast<float>(pos[k]);
    c.log_scales[3 * i + k] = static_cast<float>(log_scale[k]);
    c.sh_coeffs[i * 3 * c.sh_count() + k] = static_cast<float>(rgb_to_dc(rgb[k]));
  }
  for (int k = 0; k < 4; ++k) c.rotations[4 * i + k] = static_cast<float>(rot[k]);
  c.opacity_logits[i] = static_cast<float>(logit(opacity));
  c.instance_opacity_logits[i] = c.opacity_logits[i];
  c.labels[i] = label;
}

}  // namespace detail

inline std::vector<Camera> camera_ring(const SceneSpec& spec) {
  const double focal = spec.focal > 0.0 ? spec.focal : 1.5 * spec.width;
  std::vector<Camera> cams;
  for (int v = 0; v < spec.views; ++v) {
    const double a = 2.0 * std::numbers::pi * v / spec.views;
    const double h = spec.ring_height * (v % 2 == 0 ? 1.0 : 0.6);
    const Vec3 eye(spec.ring_radius * std::cos(a), spec.ring_radius * std::sin(a), h);
    cams.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), focal, spec.width, spec.height));
  }
  return cams;
}

inline SyntheticScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticScene scene;
  scene.spec = spec;
  GaussianCloud& c = scene.cloud;
  c.sh_degree = 0;
  c.object_count = spec.objects;
  c.instance_ready = true;
  const std::size_t n_obj = static_cast<std::size_t>(spec.objects) * spec.gaussians_per_object;
  c.resize(n_obj + spec.floaters);

  // Objects: spheres tiled by flat surfels tangent to the surface, so
  // silhouettes stay sharp where surfels are seen edge-on.
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const int per = spec.gaussians_per_object;
  std::vector<Vec3> centers;
  std::vector<double> radii;
  std::size_t i = 0;
  for (int j = 0; j < spec.objects; ++j) {
    const double a = 2.0 * std::numbers::pi * j / spec.objects + 0.3 * (unit(rng) - 0.5);
    const Vec3 center(spec.layout_radius * std::cos(a), spec.layout_radius * std::sin(a),
                      0.15 * (unit(rng) - 0.5));
    const double radius = spec.object_radius * (0.85 + 0.3 * unit(rng));
    centers.push_back(center);
    radii.push_back(radius);
    const double spacing = radius * std::sqrt(4.0 * std::numbers::pi / per);
    const Vec3 base = palette_color(j);
    for (int k = 0; k < per; ++k, ++i) {
      const double z = 1.0 - 2.0 * (k + 0.5) / per;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = golden * k;
      const Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);
      const Vec3 pos = center + radius * dir;
      const double tangent = 0.6 * spacing * std::exp(0.05 * normal(rng));
      const Vec3 ls(std::log(tangent), std::log(tangent), std::log(spec.surfel_flatness * tangent));
      const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), dir);
      Vec3 rgb = base + 0.04 * Vec3(normal(rng), normal(rng), normal(rng));
      rgb = rgb.cwiseMax(0.02).cwiseMin(0.98);
      detail::set_gaussian(c, i, pos, ls, Vec4(q.w(), q.x(), q.y(), q.z()), rgb,
                           0.95 + 0.03 * unit(rng), j + 1);
    }
  }

  // Floaters: faint isotropic blobs hovering just outside a host object.
  std::uniform_int_distribution<int> pick(0, spec.objects - 1);
  for (int f = 0; f < spec.floaters; ++f, ++i) {
    const int host = pick(rng);
    const double a = 2.0 * std::numbers::pi * unit(rng);
    const Vec3 dir(std::cos(a), std::sin(a), 0.3 * (unit(rng) - 0.5));
    const Vec3 pos = centers[host] + spec.floater_offset * radii[host] * dir.normalized();
    const Vec3 ls = Vec3::Constant(std::log(spec.floater_scale * (0.8 + 0.4 * unit(rng))));
    const double gray = 0.3 + 0.4 * unit(rng);
    const double op = spec.floater_opacity_min +
                      (spec.floater_opacity_max - spec.floater_opacity_min) * unit(rng);
    detail::set_gaussian(c, i, pos, ls, Vec4(1, 0, 0, 0), Vec3::Constant(gray), op, 0);
    scene.floater_indices.push_back(i);
    scene.floater_labels.push_back(host + 1);
  }
  c.validate();

  std::vector<int> all_ids(static_cast<std::size_t>(spec.objects));
  for (int j = 0; j < spec.objects; ++j) all_ids[j] = j + 1;
  Dataset& data = scene.dataset;
  data.cameras = camera_ring(spec);
  scene.pseudo_labels.object_count = spec.objects;
  const int r_stamp = static_cast<int>(std::floor(spec.floater_stamp_radius));
  for (int v = 0; v < spec.views; ++v) {
    const Camera& cam = data.cameras[v];
    RenderOutput r = oracle_render(c, cam, all_ids);
    data.images.push_back(std::move(r.color));
    std::vector<ImageBuffer> occ;
    for (int j = 1; j <= spec.objects; ++j) occ.push_back(r.occupancy.at(j));
    IdMap ids = r.instance_labels;
    if (spec.id_maps == IdMapSource::kOccupancy) {
      for (std::size_t k = 0; k < ids.values.size(); ++k) {
        int best = 0;
        double best_s = 0.5;
        for (int j = 0; j < spec.objects; ++j) {
          if (occ[j].values[k] > best_s) {
            best_s = occ[j].values[k];
            best = j + 1;
          }
        }
        ids.values[k] = best;
      }
    }
    scene.true_occupancy.push_back(std::move(occ));
    scene.true_id_maps.push_back(ids);
    for (std::size_t f = 0; f < scene.floater_indices.size(); ++f) {
      const Vec3 t = cam.to_view(c.position(scene.floater_indices[f]));
      if (!(t.z() > kNearPlane)) continue;
      const double px = cam.fx * t.x() / t.z() + cam.cx;
      const double py = cam.fy * t.y() / t.z() + cam.cy;
      const int cx = static_cast<int>(std::floor(px + 0.5)), cy = static_cast<int>(std::floor(py + 0.5));
      for (int dy = -r_stamp; dy <= r_stamp; ++dy) {
        for (int dx = -r_stamp; dx <= r_stamp; ++dx) {
          const int x = cx + dx, y = cy + dy;
          if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) continue;
          if (dx * dx + dy * dy > spec.floater_stamp_radius * spec.floater_stamp_radius) continue;
          ids.at(x, y) = scene.floater_labels[f];
        }
      }
    }
    scene.pseudo_labels.maps.push_back(std::move(ids));
    if (spec.eval_stride > 0 && v % spec.eval_stride == spec.eval_stride - 1) {
      data.eval_views.push_back(v);
    } else {
      data.train_views.push_back(v);
    }
  }
  return scene;
}

/// Perturbed starting point for training: geometry jittered, colors gray,
/// opacities low, no labels yet.
inline GaussianCloud initial_cloud(const SyntheticScene& scene, std::uint64_t seed,
                                   double position_noise = 0.02, double rotation_noise = 0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GaussianCloud c = scene.cloud;
  c.object_count = 0;
  c.instance_ready = false;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      c.positions[3 * i + k] += static_cast<float>(position_noise * normal(rng));
      c.log_scales[3 * i + k] += static_cast<float>(0.1 * normal(rng));
    }
    Vec4 q = c.rotation(i);
    for (int k = 0; k < 4; ++k) q[k] += rotation_noise * normal(rng);
    q.normalize();
    for (int k = 0; k < 4; ++k) c.rotations[4 * i + k] = static_cast<float>(q[k]);
    for (int k = 0; k < 3 * c.sh_count(); ++k) c.sh_coeffs[i * 3 * c.sh_count() + k] = 0.0f;
    c.opacity_logits[i] = static_cast<float>(logit(0.1));
    c.instance_opacity_logits[i] = c.opacity_logits[i];
    c.labels[i] = 0;
  }
  return c;
}

}  // namespace dualsplat

#endif  // DUALSPLAT_SYNTH_HPP_
