// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DUALSPLAT_LOSSES_HPP_
#define DUALSPLAT_LOSSES_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "dualsplat/image.hpp"
#include "dualsplat/raster.hpp"

namespace dualsplat {

enum class Stage { kAppearance = 1, kInstance = 2 };

struct LossWeights {
  double lambda_ssim = 0.2;
  double lambda_o = 0.1;
  int m_objects = 3;

  void validate() const {
    if (!(lambda_ssim >= 0.0) || !(lambda_o >= 0.0)) {
      throw std::invalid_argument("loss weights must be non-negative");
    }
    if (m_objects < 1) throw std::invalid_argument("m_objects must be >= 1");
  }
};

/// Scalar loss plus dL/d(input image).
struct LossAndGrad {
  double value = 0.0;
  ImageBuffer grad;
};

// ---------------------------------------------------------------------------
// L1

inline double l1_loss(const ImageBuffer& rendered, const ImageBuffer& target) {
  require_same_shape(rendered, target, "l1_loss");
  if (rendered.values.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < rendered.values.size(); ++k) {
    sum += std::abs(rendered.values[k] - target.values[k]);
  }
  return sum / static_cast<double>(rendered.values.size());
}

inline LossAndGrad l1_loss_grad(const ImageBuffer& rendered, const ImageBuffer& target) {
  LossAndGrad out{l1_loss(rendered, target), ImageBuffer(rendered.width, rendered.height, rendered.channels)};
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(1, rendered.values.size()));
  for (std::size_t k = 0; k < rendered.values.size(); ++k) {
    const double d = rendered.values[k] - target.values[k];
    out.grad.values[k] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
  }
  return out;
}

inline double psnr(const ImageBuffer& rendered, const ImageBuffer& target) {
  require_same_shape(rendered, target, "psnr");
  double mse = 0.0;
  for (std::size_t k = 0; k < rendered.values.size(); ++k) {
    const double d = rendered.values[k] - target.values[k];
    mse += d * d;
  }
  mse /= static_cast<double>(std::max<std::size_t>(1, rendered.values.size()));
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// ---------------------------------------------------------------------------
// SSIM: 11x11 Gaussian window (sigma 1.5), evaluated at every position where
// the window fits inside the image, averaged over positions and channels.

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

inline std::array<double, kSsimWindow> ssim_kernel_1d() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

namespace detail {

// Valid-mode separable filtering of a w x h plane; output (w-10) x (h-10).
inline std::vector<double> ssim_filter(const std::vector<double>& src, int w, int h) {
  static const auto k = ssim_kernel_1d();
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

// Adjoint of ssim_filter: spreads a (w-10) x (h-10) map back to w x h.
inline std::vector<double> ssim_filter_adjoint(const std::vector<double>& src, int w, int h) {
  static const auto k = ssim_kernel_1d();
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double v = src[static_cast<std::size_t>(y) * ow + x];
      for (int i = 0; i < kSsimWindow; ++i) tmp[static_cast<std::size_t>(y + i) * ow + x] += k[i] * v;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double v = tmp[static_cast<std::size_t>(y) * ow + x];
      for (int i = 0; i < kSsimWindow; ++i) out[static_cast<std::size_t>(y) * w + x + i] += k[i] * v;
    }
  }
  return out;
}

inline LossAndGrad ssim_impl(const ImageBuffer& a, const ImageBuffer& b, bool want_grad) {
  require_same_shape(a, b, "ssim_loss");
  if (a.width < kSsimWindow || a.height < kSsimWindow) {
    throw std::invalid_argument("ssim_loss: image smaller than the 11x11 window");
  }
  const int w = a.width, h = a.height, nc = a.channels;
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  const std::size_t np = static_cast<std::size_t>(w) * h;
  const std::size_t no = static_cast<std::size_t>(ow) * oh;
  const double norm = 1.0 / (static_cast<double>(no) * nc);

  LossAndGrad out;
  if (want_grad) out.grad = ImageBuffer(w, h, nc);
  double ssim_sum = 0.0;
  std::vector<double> x(np), y(np), xx(np), yy(np), xy(np);
  for (int c = 0; c < nc; ++c) {
    for (std::size_t p = 0; p < np; ++p) {
      x[p] = a.values[p * nc + c];
      y[p] = b.values[p * nc + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = ssim_filter(x, w, h), my = ssim_filter(y, w, h);
    const auto exx = ssim_filter(xx, w, h), eyy = ssim_filter(yy, w, h), exy = ssim_filter(xy, w, h);
    std::vector<double> g_mu, g_xx, g_xy;
    if (want_grad) {
      g_mu.resize(no);
      g_xx.resize(no);
      g_xy.resize(no);
    }
    for (std::size_t o = 0; o < no; ++o) {
      const double vx = exx[o] - mx[o] * mx[o];
      const double vy = eyy[o] - my[o] * my[o];
      const double cxy = exy[o] - mx[o] * my[o];
      const double a1 = 2.0 * mx[o] * my[o] + kSsimC1;
      const double a2 = 2.0 * cxy + kSsimC2;
      const double b1 = mx[o] * mx[o] + my[o] * my[o] + kSsimC1;
      const double b2 = vx + vy + kSsimC2;
      const double s = (a1 * a2) / (b1 * b2);
      ssim_sum += s;
      if (want_grad) {
        // d(1 - mean SSIM) with respect to the window moments of `a`.
        const double d_mu = s * (2.0 * my[o] / a1 - 2.0 * my[o] / a2 - 2.0 * mx[o] / b1 + 2.0 * mx[o] / b2);
        g_mu[o] = -norm * d_mu;
        g_xx[o] = -norm * (-s / b2);
        g_xy[o] = -norm * (2.0 * s / a2);
      }
    }
    if (want_grad) {
      const auto f_mu = ssim_filter_adjoint(g_mu, w, h);
      const auto f_xx = ssim_filter_adjoint(g_xx, w, h);
      const auto f_xy = ssim_filter_adjoint(g_xy, w, h);
      for (std::size_t p = 0; p < np; ++p) {
        out.grad.values[p * nc + c] = f_mu[p] + 2.0 * x[p] * f_xx[p] + y[p] * f_xy[p];
      }
    }
  }
  out.value = 1.0 - ssim_sum * norm;
  return out;
}

}  // namespace detail

/// 1 - SSIM, in [0, 2].
inline double ssim_loss(const ImageBuffer& rendered, const ImageBuffer& target) {
  return detail::ssim_impl(rendered, target, false).value;
}

inline LossAndGrad ssim_loss_grad(const ImageBuffer& rendered, const ImageBuffer& target) {
  return detail::ssim_impl(rendered, target, true);
}

// ---------------------------------------------------------------------------
// Object occupancy loss

inline constexpr double kCeEpsilon = 1e-6;

/// B_j: 1 where the ID map equals j.
inline BinaryMask object_mask(const IdMap& ids, int object_id) {
  BinaryMask m(ids.width, ids.height, 1);
  for (std::size_t k = 0; k < ids.values.size(); ++k) m.values[k] = ids.values[k] == object_id;
  return m;
}

/// Mean binary cross-entropy of the clamped occupancy against B_j; the
/// gradient is with respect to the raw occupancy (zero where clamped).
inline LossAndGrad object_ce_loss_grad(const ImageBuffer& occupancy, const BinaryMask& mask) {
  require_same_size(occupancy, mask, "object_ce_loss");
  if (occupancy.channels != 1) throw std::invalid_argument("object_ce_loss: occupancy must be 1-channel");
  LossAndGrad out;
  out.grad = ImageBuffer(occupancy.width, occupancy.height, 1);
  const std::size_t n = occupancy.values.size();
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double raw = occupancy.values[k];
    const double s = std::clamp(raw, kCeEpsilon, 1.0 - kCeEpsilon);
    const double b = mask.values[k] ? 1.0 : 0.0;
    sum += -(b * std::log(s) + (1.0 - b) * std::log(1.0 - s));
    if (raw > kCeEpsilon && raw < 1.0 - kCeEpsilon) {
      out.grad.values[k] = inv_n * (s - b) / (s * (1.0 - s));
    }
  }
  out.value = sum * inv_n;
  return out;
}

inline double object_ce_loss(const ImageBuffer& occupancy, const BinaryMask& mask) {
  return object_ce_loss_grad(occupancy, mask).value;
}

/// Object ids (excluding background) present in a view's ID map, ascending.
inline std::vector<int> present_objects(const IdMap& ids) {
  std::set<int> seen;
  for (auto v : ids.values) {
    if (v > 0) seen.insert(v);
  }
  return {seen.begin(), seen.end()};
}

/// Uniform sample of up to m distinct object ids present in the view,
/// returned in ascending order.
template <typename Rng>
std::vector<int> sample_objects(const IdMap& ids, int m, Rng& rng) {
  if (m < 1) throw std::invalid_argument("sample_objects: m must be >= 1");
  std::vector<int> pool = present_objects(ids);
  if (pool.size() <= static_cast<std::size_t>(m)) return pool;
  for (int k = 0; k < m; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(m);
  std::sort(pool.begin(), pool.end());
  return pool;
}

struct RandomObjectLoss {
  double value = 0.0;
  std::vector<int> object_ids;
  std::vector<double> per_object;
  /// dL_obj/dS_j for each sampled object.
  std::map<int, ImageBuffer> grads;
};

/// Averages the per-object CE over a random sample of the view's objects,
/// given an already rendered output holding S_j for every sampled id.
inline RandomObjectLoss object_loss_from_render(const RenderOutput& rendered, const IdMap& ids,
                                                const std::vector<int>& sampled) {
  RandomObjectLoss out;
  out.object_ids = sampled;
  if (sampled.empty()) return out;
  const double inv_m = 1.0 / static_cast<double>(sampled.size());
  for (int id : sampled) {
    auto lg = object_ce_loss_grad(rendered.occupancy.at(id), object_mask(ids, id));
    out.per_object.push_back(lg.value);
    out.value += lg.value * inv_m;
    for (double& g : lg.grad.values) g *= inv_m;
    out.grads.emplace(id, std::move(lg.grad));
  }
  return out;
}

using OccupancyRenderFn =
    std::function<RenderOutput(const GaussianCloud&, const Camera&, const std::vector<int>&)>;

template <typename Rng>
RandomObjectLoss random_object_loss(const OccupancyRenderFn& render_fn, const GaussianCloud& cloud,
                                    const Camera& cam, const IdMap& ids, int m, Rng& rng) {
  const std::vector<int> sampled = sample_objects(ids, m, rng);
  if (sampled.empty()) return {};
  return object_loss_from_render(render_fn(cloud, cam, sampled), ids, sampled);
}

/// Stage 1: L1 + lambda_ssim SSIM. Stage 2 adds lambda_o L_obj.
inline double total_loss(double l1, double ssim, double obj, const LossWeights& w, Stage stage) {
  double total = l1 + w.lambda_ssim * ssim;
  if (stage == Stage::kInstance) total += w.lambda_o * obj;
  return total;
}

}  // namespace dualsplat

#endif  // DUALSPLAT_LOSSES_HPP_
