// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode gradients of the rasterizer.
//
// The color branch differentiates C(v) fully, including through the
// transmittance chain. The occupancy branch treats every T_i as a constant,
// so S_j(v) = sum sigma*_i G_i(v) T_i only reaches sigma*_i and, through
// G_i, the geometry (mean, rotation, scale). Neither branch writes into the
// other's appearance parameters.

#ifndef DUALSPLAT_BACKWARD_HPP_
#define DUALSPLAT_BACKWARD_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "dualsplat/raster.hpp"
#include "dualsplat/scene.hpp"

namespace dualsplat {

/// Per-primitive gradients with the same layout as GaussianCloud.
struct GradientBuffer {
  int sh_degree = 0;
  std::vector<double> positions;
  std::vector<double> sh_coeffs;
  std::vector<double> opacity_logits;
  std::vector<double> instance_opacity_logits;
  std::vector<double> rotations;
  std::vector<double> log_scales;
  /// dL/d(mean2d) in pixels, summed over views; drives densification.
  std::vector<double> screen_means;
  /// 1 for primitives that survived projection in the view(s).
  std::vector<std::uint8_t> visible;

  static GradientBuffer zeros_like(const GaussianCloud& cloud) {
    GradientBuffer g;
    g.sh_degree = cloud.sh_degree;
    g.positions.assign(cloud.positions.size(), 0.0);
    g.sh_coeffs.assign(cloud.sh_coeffs.size(), 0.0);
    g.opacity_logits.assign(cloud.opacity_logits.size(), 0.0);
    g.instance_opacity_logits.assign(cloud.instance_opacity_logits.size(), 0.0);
    g.rotations.assign(cloud.rotations.size(), 0.0);
    g.log_scales.assign(cloud.log_scales.size(), 0.0);
    g.screen_means.assign(2 * cloud.size(), 0.0);
    g.visible.assign(cloud.size(), 0);
    return g;
  }

  std::size_t size() const { return opacity_logits.size(); }

  std::span<double> block(ParamBlock b) {
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
  std::span<const double> block(ParamBlock b) const {
    return const_cast<GradientBuffer*>(this)->block(b);
  }

  bool all_finite() const {
    for (ParamBlock b : kAllParamBlocks) {
      for (double v : block(b)) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }
};

/// Elementwise sum of two gradient buffers of identical shape.
inline GradientBuffer accumulate_geometry(const GradientBuffer& a, const GradientBuffer& b) {
  if (a.sh_degree != b.sh_degree || a.size() != b.size() ||
      a.sh_coeffs.size() != b.sh_coeffs.size()) {
    throw std::invalid_argument("accumulate_geometry: gradient buffer shape mismatch");
  }
  GradientBuffer out = a;
  for (ParamBlock blk : kAllParamBlocks) {
    auto dst = out.block(blk);
    auto src = b.block(blk);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  for (std::size_t k = 0; k < out.screen_means.size(); ++k) out.screen_means[k] += b.screen_means[k];
  for (std::size_t k = 0; k < out.visible.size(); ++k) out.visible[k] |= b.visible[k];
  return out;
}

struct BackwardOptions {
  Vec3 background = Vec3::Zero();
  int tile_size = kDefaultTileSize;
  int workers = 1;
};

namespace detail {

// Gradient with respect to one projected splat's screen-space quantities.
struct SplatGrad {
  Vec2 mean = Vec2::Zero();
  // dL/d(conic) for conic = [[a, b], [b, c]], b counted once.
  double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
  double opacity = 0.0;
  double instance_opacity = 0.0;
  Vec3 color = Vec3::Zero();
  bool touched = false;

  void add(const SplatGrad& o) {
    mean += o.mean;
    conic_a += o.conic_a;
    conic_b += o.conic_b;
    conic_c += o.conic_c;
    opacity += o.opacity;
    instance_opacity += o.instance_opacity;
    color += o.color;
    touched = touched || o.touched;
  }
};

inline void check_finite(const ImageBuffer& img, const char* what) {
  for (double v : img.values) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": non-finite upstream gradient");
    }
  }
}

// dL/dG at pixel v into mean and conic gradients.
inline void add_gaussian_grad(SplatGrad& sg, const ProjectedGaussian& pg, const Vec2& v,
                              double gaussian, double dl_dg) {
  if (dl_dg == 0.0) return;
  const Vec2 d = v - pg.mean2d;
  sg.mean += dl_dg * gaussian * (pg.conic * d);
  sg.conic_a += dl_dg * (-0.5 * gaussian * d.x() * d.x());
  sg.conic_b += dl_dg * (-gaussian * d.x() * d.y());
  sg.conic_c += dl_dg * (-0.5 * gaussian * d.y() * d.y());
}

// Chains one splat's screen-space gradient back to the primitive parameters.
inline void chain_to_parameters(const GaussianCloud& cloud, const Camera& cam,
                                const ProjectedGaussian& pg, const SplatGrad& sg,
                                GradientBuffer& out) {
  const std::size_t i = pg.source_index;
  const Vec3 mu = cloud.position(i);
  const Vec3 t = cam.to_view(mu);
  const Mat3& w = cam.rotation;
  Vec3 dl_dmu = Vec3::Zero();

  // Color: SH coefficients and the view direction.
  if (sg.color != Vec3::Zero()) {
    const Vec3 offset = mu - cam.center();
    const double len = offset.norm();
    const Vec3 dir = offset / len;
    const sh::Basis basis = sh::evaluate_basis(cloud.sh_degree, dir);
    const int k_count = cloud.sh_count();
    const auto coeffs = cloud.sh(i);
    const std::size_t base = i * 3 * static_cast<std::size_t>(k_count);
    Vec3 dl_ddir = Vec3::Zero();
    for (int ch = 0; ch < 3; ++ch) {
      if (pg.color_clamped[ch]) continue;
      const double gc = sg.color[ch];
      for (int k = 0; k < k_count; ++k) {
        out.sh_coeffs[base + 3 * k + ch] += gc * basis.value[k];
        dl_ddir += gc * coeffs[3 * k + ch] * basis.grad[k];
      }
    }
    dl_dmu += (Mat3::Identity() - dir * dir.transpose()) * dl_ddir / len;
  }

  if (sg.opacity != 0.0) {
    out.opacity_logits[i] += sg.opacity * pg.opacity * (1.0 - pg.opacity);
  }
  if (sg.instance_opacity != 0.0) {
    out.instance_opacity_logits[i] +=
        sg.instance_opacity * pg.instance_opacity * (1.0 - pg.instance_opacity);
  }

  // Conic -> 2D covariance: dL/dSigma' = -A G_A A with symmetric G_A.
  Mat2 g_conic;
  g_conic << sg.conic_a, 0.5 * sg.conic_b, 0.5 * sg.conic_b, sg.conic_c;
  const Mat2 g_cov2d = -pg.conic * g_conic * pg.conic;

  // Sigma' = T Sigma T^T + dilation, T = J W.
  const Mat23 jac = projection_jacobian(cam, t);
  const Mat23 tm = jac * w;
  const Vec4 q_raw = cloud.rotation(i);
  const double q_norm = q_raw.norm();
  const Vec4 q = normalized_quaternion(q_raw);
  const Mat3 rot = quaternion_to_rotation(q);
  const Vec3 s = cloud.log_scale(i).array().exp();
  const Mat3 m = rot * s.asDiagonal();
  const Mat3 cov3d = m * m.transpose();

  const Mat3 g_cov3d = tm.transpose() * g_cov2d * tm;
  const Mat23 g_tm = 2.0 * g_cov2d * tm * cov3d;
  const Mat23 g_jac = g_tm * w.transpose();

  // J(t) and mean2d(t).
  const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
  Vec3 dl_dt = jac.transpose() * sg.mean;
  dl_dt.x() += g_jac(0, 2) * (-cam.fx * iz2);
  dl_dt.y() += g_jac(1, 2) * (-cam.fy * iz2);
  dl_dt.z() += g_jac(0, 0) * (-cam.fx * iz2) + g_jac(0, 2) * (2.0 * cam.fx * t.x() * iz3) +
               g_jac(1, 1) * (-cam.fy * iz2) + g_jac(1, 2) * (2.0 * cam.fy * t.y() * iz3);
  dl_dmu += w.transpose() * dl_dt;
  for (int k = 0; k < 3; ++k) out.positions[3 * i + k] += dl_dmu[k];
  out.screen_means[2 * i] += sg.mean.x();
  out.screen_means[2 * i + 1] += sg.mean.y();

  // Sigma = M M^T, M = R diag(s).
  const Mat3 g_m = 2.0 * g_cov3d * m;
  for (int k = 0; k < 3; ++k) {
    double dl_ds = 0.0;
    for (int r = 0; r < 3; ++r) dl_ds += g_m(r, k) * rot(r, k);
    out.log_scales[3 * i + k] += dl_ds * s[k];
  }
  Mat3 g_rot;
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) g_rot(r, k) = g_m(r, k) * s[k];
  }
  const double qw = q[0], qx = q[1], qy = q[2], qz = q[3];
  Mat3 dw, dx, dy, dz;
  dw << 0, -qz, qy, qz, 0, -qx, -qy, qx, 0;
  dx << 0, qy, qz, qy, -2 * qx, -qw, qz, qw, -2 * qx;
  dy << -2 * qy, qx, qw, qx, 0, qz, -qw, qz, -2 * qy;
  dz << -2 * qz, -qw, qx, qw, -2 * qz, qy, qx, qy, 0;
  const Vec4 dl_dq_hat(2.0 * (g_rot.cwiseProduct(dw)).sum(), 2.0 * (g_rot.cwiseProduct(dx)).sum(),
                       2.0 * (g_rot.cwiseProduct(dy)).sum(), 2.0 * (g_rot.cwiseProduct(dz)).sum());
  const Vec4 dl_dq = (dl_dq_hat - q * q.dot(dl_dq_hat)) / q_norm;
  for (int k = 0; k < 4; ++k) out.rotations[4 * i + k] += dl_dq[k];
}

}  // namespace detail

/// Joint backward pass. `color_upstream` (3 channels) may be null; each entry
/// of `occupancy_upstream` maps an object id j to dL/dS_j(v).
inline GradientBuffer backward(const GaussianCloud& cloud, const Camera& cam,
                               const ImageBuffer* color_upstream,
                               const std::map<int, ImageBuffer>& occupancy_upstream,
                               const BackwardOptions& opts = {}) {
  if (color_upstream) {
    if (color_upstream->width != cam.width || color_upstream->height != cam.height ||
        color_upstream->channels != 3) {
      throw std::invalid_argument("backward: color upstream must be a 3-channel render-sized image");
    }
    detail::check_finite(*color_upstream, "backward");
  }
  std::vector<int> ids;
  std::vector<const ImageBuffer*> occ_up;
  for (const auto& [id, img] : occupancy_upstream) {
    if (img.width != cam.width || img.height != cam.height || img.channels != 1) {
      throw std::invalid_argument("backward: occupancy upstream must be a 1-channel render-sized image");
    }
    detail::check_finite(img, "backward");
    ids.push_back(id);
    occ_up.push_back(&img);
  }
  validate_object_ids(ids, cloud.object_count, "backward");

  const SortedSplatList list = bin_and_sort(cloud, cam, opts.tile_size);
  std::vector<std::vector<detail::SplatGrad>> tile_grads(list.tile_count());

  for_each_tile(list.tile_count(), opts.workers, [&](std::size_t t) {
    const auto& tile_ids = list.tiles[t];
    auto& grads = tile_grads[t];
    grads.assign(tile_ids.size(), {});
    const int tx = static_cast<int>(t % list.tiles_x), ty = static_cast<int>(t / list.tiles_x);
    const int x_end = std::min(cam.width, (tx + 1) * list.tile_size);
    const int y_end = std::min(cam.height, (ty + 1) * list.tile_size);
    const auto splat_at = [&](std::size_t k) -> const ProjectedGaussian& {
      return list.splats[tile_ids[k]];
    };
    std::vector<BlendStep> trace;
    for (int y = ty * list.tile_size; y < y_end; ++y) {
      for (int x = tx * list.tile_size; x < x_end; ++x) {
        trace.clear();
        const Vec2 v(x, y);
        const PixelResult px =
            composite_pixel(tile_ids.size(), splat_at, v, std::span<const int>(), opts.background, &trace);
        if (trace.empty()) continue;

        if (color_upstream) {
          const Vec3 g(color_upstream->at(x, y, 0), color_upstream->at(x, y, 1),
                       color_upstream->at(x, y, 2));
          if (g != Vec3::Zero()) {
            Vec3 behind = opts.background * px.final_transmittance;
            for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
              const ProjectedGaussian& pg = splat_at(it->splat);
              auto& sg = grads[it->splat];
              const double weight = it->alpha * it->transmittance;
              const double dl_dalpha =
                  g.dot(pg.color * it->transmittance - behind / (1.0 - it->alpha));
              sg.color += g * weight;
              if (!it->alpha_clamped) {
                sg.opacity += dl_dalpha * it->gaussian;
                detail::add_gaussian_grad(sg, pg, v, it->gaussian, dl_dalpha * pg.opacity);
              }
              sg.touched = true;
              behind += pg.color * weight;
            }
          }
        }

        for (std::size_t j = 0; j < ids.size(); ++j) {
          const double u = occ_up[j]->at(x, y);
          if (u == 0.0) continue;
          for (const BlendStep& step : trace) {
            const ProjectedGaussian& pg = splat_at(step.splat);
            if (pg.label != ids[j]) continue;
            auto& sg = grads[step.splat];
            sg.instance_opacity += u * step.gaussian * step.transmittance;
            detail::add_gaussian_grad(sg, pg, v, step.gaussian,
                                      u * pg.instance_opacity * step.transmittance);
            sg.touched = true;
          }
        }
      }
    }
  });

  // Fixed tile order keeps the reduction independent of the worker count.
  std::vector<detail::SplatGrad> splat_grads(list.splats.size());
  for (std::size_t t = 0; t < list.tile_count(); ++t) {
    const auto& tile_ids = list.tiles[t];
    for (std::size_t k = 0; k < tile_ids.size(); ++k) splat_grads[tile_ids[k]].add(tile_grads[t][k]);
  }

  GradientBuffer out = GradientBuffer::zeros_like(cloud);
  for (std::size_t s = 0; s < list.splats.size(); ++s) {
    out.visible[list.splats[s].source_index] = 1;
    if (!splat_grads[s].touched) continue;
    detail::chain_to_parameters(cloud, cam, list.splats[s], splat_grads[s], out);
  }
  return out;
}

/// Gradients of a loss on the color image only.
inline GradientBuffer backward_color(const GaussianCloud& cloud, const Camera& cam,
                                     const ImageBuffer& upstream, const BackwardOptions& opts = {}) {
  return backward(cloud, cam, &upstream, {}, opts);
}

/// Gradients of a loss on occupancy maps only (transmittance held constant).
inline GradientBuffer backward_occupancy(const GaussianCloud& cloud, const Camera& cam,
                                         const std::map<int, ImageBuffer>& upstream,
                                         const BackwardOptions& opts = {}) {
  return backward(cloud, cam, nullptr, upstream, opts);
}

}  // namespace dualsplat

#endif  // DUALSPLAT_BACKWARD_HPP_
