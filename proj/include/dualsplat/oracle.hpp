// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Reference machinery for verifying the rasterizer: a per-pixel brute-force
// renderer with no tiling, a replay evaluator that re-runs a recorded
// compositing schedule on perturbed parameters, and central differences.

#ifndef DUALSPLAT_ORACLE_HPP_
#define DUALSPLAT_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "dualsplat/raster.hpp"
#include "dualsplat/scene.hpp"

namespace dualsplat {

struct OracleOptions {
  Vec3 background = Vec3::Zero();
  /// Stop a ray once transmittance would drop below 1e-4.
  bool early_termination = true;
};

/// Compositing decisions recorded by oracle_render, one list per pixel.
struct OracleTrace {
  struct Step {
    std::uint32_t gaussian = 0;
    bool alpha_clamped = false;
    double transmittance = 0.0;
  };
  int width = 0;
  int height = 0;
  std::vector<std::vector<Step>> pixels;
  /// Per primitive: which color channels were clamped in this view.
  std::vector<ClampFlags> color_clamped;
};

/// Evaluates every pixel by scanning all primitives in depth order,
/// one scalar at a time.
inline RenderOutput oracle_render(const GaussianCloud& cloud, const Camera& cam,
                                  const std::vector<int>& object_ids,
                                  const OracleOptions& opts = {}, OracleTrace* trace = nullptr) {
  validate_object_ids(object_ids, cloud.object_count, "oracle_render");
  std::vector<ProjectedGaussian> proj;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (auto pg = project_gaussian(cloud, i, cam)) proj.push_back(*pg);
  }
  std::vector<std::size_t> order(proj.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (proj[a].depth != proj[b].depth) return proj[a].depth < proj[b].depth;
    return proj[a].source_index < proj[b].source_index;
  });

  RenderOutput out;
  out.color = ImageBuffer(cam.width, cam.height, 3);
  out.final_transmittance = ImageBuffer(cam.width, cam.height, 1);
  out.instance_labels = IdMap(cam.width, cam.height, 1);
  out.contributor_count = IdMap(cam.width, cam.height, 1);
  for (int id : object_ids) out.occupancy[id] = ImageBuffer(cam.width, cam.height, 1);
  if (trace) {
    trace->width = cam.width;
    trace->height = cam.height;
    trace->pixels.assign(static_cast<std::size_t>(cam.width) * cam.height, {});
    trace->color_clamped.assign(cloud.size(), ClampFlags{});
    for (const auto& pg : proj) trace->color_clamped[pg.source_index] = pg.color_clamped;
  }

  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double t = 1.0;
      double r = 0.0, g = 0.0, b = 0.0;
      std::map<int, double> occ;
      double best = -1.0;
      int best_label = 0;
      int count = 0;
      for (std::size_t o : order) {
        const ProjectedGaussian& pg = proj[o];
        const double dx = x - pg.mean2d.x(), dy = y - pg.mean2d.y();
        const double m2 = pg.conic(0, 0) * dx * dx + 2.0 * pg.conic(0, 1) * dx * dy +
                          pg.conic(1, 1) * dy * dy;
        if (m2 > kSupportMahalanobis2) continue;
        const double gauss = std::exp(-0.5 * m2);
        double alpha = pg.opacity * gauss;
        const bool clamped = alpha > kAlphaMax;
        if (clamped) alpha = kAlphaMax;
        if (alpha < kAlphaMin) continue;
        if (opts.early_termination && t * (1.0 - alpha) < kTransmittanceMin) break;
        r += pg.color.x() * alpha * t;
        g += pg.color.y() * alpha * t;
        b += pg.color.z() * alpha * t;
        occ[pg.label] += pg.instance_opacity * gauss * t;
        const double inst = pg.instance_opacity * gauss;
        if (inst > best) {
          best = inst;
          best_label = pg.label;
        }
        if (trace) {
          trace->pixels[static_cast<std::size_t>(y) * cam.width + x].push_back(
              {pg.source_index, clamped, t});
        }
        t *= 1.0 - alpha;
        ++count;
      }
      out.color.at(x, y, 0) = r + opts.background.x() * t;
      out.color.at(x, y, 1) = g + opts.background.y() * t;
      out.color.at(x, y, 2) = b + opts.background.z() * t;
      out.final_transmittance.at(x, y) = t;
      out.contributor_count.at(x, y) = count;
      out.instance_labels.at(x, y) = best >= kInstanceLabelFloor ? best_label : 0;
      for (auto& [id, img] : out.occupancy) img.at(x, y) = occ.count(id) ? occ[id] : 0.0;
    }
  }
  out.stats.compositing_passes = 1;
  out.stats.visible_splats = proj.size();
  return out;
}

struct ReplayOutput {
  ImageBuffer color;
  std::map<int, ImageBuffer> occupancy;
};

/// Re-evaluates color and occupancy on (possibly perturbed) parameters using
/// the blend order, active sets, and clamp decisions stored in `trace`. With
/// `freeze_transmittance` every T_i is taken from the trace instead of being
/// recomputed, which is the stop-gradient semantics of the occupancy branch.
inline ReplayOutput oracle_replay(const GaussianCloud& cloud, const Camera& cam,
                                  const std::vector<int>& object_ids, const OracleTrace& trace,
                                  bool freeze_transmittance, const Vec3& background = Vec3::Zero()) {
  struct Local {
    double mx, my, ca, cb, cc;
    Vec3 color;
    double opacity, instance_opacity;
  };
  std::vector<Local> local(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 mu = cloud.position(i);
    const Vec3 t = cam.rotation * mu + cam.translation;
    const double x = t.x(), y = t.y(), z = t.z();
    Local& l = local[i];
    l.mx = cam.fx * x / z + cam.cx;
    l.my = cam.fy * y / z + cam.cy;
    Mat23 jac;
    jac << cam.fx / z, 0.0, -cam.fx * x / (z * z), 0.0, cam.fy / z, -cam.fy * y / (z * z);
    const Mat23 jw = jac * cam.rotation;
    Mat2 cov = jw * build_covariance(cloud.rotation(i), cloud.log_scale(i)) * jw.transpose();
    cov(0, 0) += kCovarianceDilation;
    cov(1, 1) += kCovarianceDilation;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    l.ca = cov(1, 1) / det;
    l.cb = -cov(0, 1) / det;
    l.cc = cov(0, 0) / det;

    const Vec3 dir = (mu - cam.center()).normalized();
    const sh::Basis basis = sh::evaluate_basis(cloud.sh_degree, dir);
    const auto coeffs = cloud.sh(i);
    const ClampFlags clamp = i < trace.color_clamped.size() ? trace.color_clamped[i] : ClampFlags{};
    for (int ch = 0; ch < 3; ++ch) {
      double v = 0.5;
      for (int k = 0; k < cloud.sh_count(); ++k) v += basis.value[k] * coeffs[3 * k + ch];
      l.color[ch] = clamp[ch] ? (v < 0.5 ? 0.0 : 1.0) : v;
    }
    l.opacity = sigmoid(cloud.opacity_logits[i]);
    l.instance_opacity = sigmoid(cloud.instance_opacity_logits[i]);
  }

  ReplayOutput out;
  out.color = ImageBuffer(cam.width, cam.height, 3);
  for (int id : object_ids) out.occupancy[id] = ImageBuffer(cam.width, cam.height, 1);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const auto& steps = trace.pixels[static_cast<std::size_t>(y) * cam.width + x];
      double t = 1.0;
      Vec3 c = Vec3::Zero();
      for (const auto& step : steps) {
        const Local& l = local[step.gaussian];
        const double dx = x - l.mx, dy = y - l.my;
        const double gauss = std::exp(-0.5 * (l.ca * dx * dx + 2.0 * l.cb * dx * dy + l.cc * dy * dy));
        const double alpha = step.alpha_clamped ? kAlphaMax : l.opacity * gauss;
        const double t_used = freeze_transmittance ? step.transmittance : t;
        c += l.color * (alpha * t_used);
        const int label = cloud.labels[step.gaussian];
        if (auto it = out.occupancy.find(label); it != out.occupancy.end()) {
          it->second.at(x, y) += l.instance_opacity * gauss * t_used;
        }
        t *= 1.0 - alpha;
      }
      c += background * t;
      for (int ch = 0; ch < 3; ++ch) out.color.at(x, y, ch) = c[ch];
    }
  }
  return out;
}

/// Addresses one scalar parameter of a GaussianCloud.
struct ParamRef {
  ParamBlock block = ParamBlock::kPosition;
  std::size_t index = 0;
};

/// Central-difference estimate of dL/dp for each selected parameter. The
/// step actually applied is measured after rounding to storage precision.
inline std::vector<double> finite_diff_gradient(
    const std::function<double(const GaussianCloud&)>& loss_fn, const GaussianCloud& cloud,
    const std::vector<ParamRef>& params, double h = 1e-4) {
  std::vector<double> grads;
  grads.reserve(params.size());
  GaussianCloud work = cloud;
  for (const ParamRef& p : params) {
    auto values = work.block(p.block);
    if (p.index >= values.size()) throw std::out_of_range("finite_diff_gradient: bad parameter index");
    const float base = values[p.index];
    const float plus = static_cast<float>(base + h);
    const float minus = static_cast<float>(base - h);
    values[p.index] = plus;
    const double l_plus = loss_fn(work);
    values[p.index] = minus;
    const double l_minus = loss_fn(work);
    values[p.index] = base;
    if (!std::isfinite(l_plus) || !std::isfinite(l_minus)) {
      throw std::runtime_error("finite_diff_gradient: non-finite loss");
    }
    grads.push_back((l_plus - l_minus) / (static_cast<double>(plus) - static_cast<double>(minus)));
  }
  return grads;
}

/// Weighted-sum loss sum_v <u_C, C> + sum_j sum_v u_j S_j over a replay.
inline double replay_linear_loss(const ReplayOutput& r, const ImageBuffer* color_weights,
                                 const std::map<int, ImageBuffer>& occupancy_weights) {
  double loss = 0.0;
  if (color_weights) {
    for (std::size_t k = 0; k < r.color.values.size(); ++k) {
      loss += color_weights->values[k] * r.color.values[k];
    }
  }
  for (const auto& [id, w] : occupancy_weights) {
    const auto& s = r.occupancy.at(id);
    for (std::size_t k = 0; k < s.values.size(); ++k) loss += w.values[k] * s.values[k];
  }
  return loss;
}

}  // namespace dualsplat

#endif  // DUALSPLAT_ORACLE_HPP_
