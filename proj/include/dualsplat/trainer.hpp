// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Two-stage optimization. Stage 1 fits appearance with densification and
// opacity resets. Stage 2 votes labels, copies sigma into sigma*, and adds
// the random object loss on the instance occupancy maps.

#ifndef DUALSPLAT_TRAINER_HPP_
#define DUALSPLAT_TRAINER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualsplat/adam.hpp"
#include "dualsplat/backward.hpp"
#include "dualsplat/dataset.hpp"
#include "dualsplat/labeling.hpp"
#include "dualsplat/losses.hpp"
#include "dualsplat/raster.hpp"
#include "dualsplat/scene.hpp"

namespace dualsplat {

struct TrainConfig {
  long total_iters = 30000;
  long stage2_start = 20000;
  int m_objects = 3;
  double lambda_o = 0.1;
  double lambda_ssim = 0.2;

  double lr_position_init = 1.6e-4;
  double lr_position_final = 1.6e-6;
  double lr_sh = 2.5e-3;
  double lr_opacity = 0.05;
  /// Negative: reuse lr_opacity.
  double lr_instance_opacity = -1.0;
  double lr_rotation = 1e-3;
  double lr_scale = 5e-3;

  long densify_from = 500;
  long densify_interval = 100;
  long densify_until = 15000;
  /// Average screen-space mean gradient, in normalized device units.
  double grad_threshold = 2e-4;
  /// Clone below, split above this fraction of the scene extent.
  double percent_dense = 0.01;
  double prune_opacity_threshold = 0.005;
  /// Prune primitives larger than this fraction of the extent (0: off).
  double prune_scale_fraction = 0.1;
  long opacity_reset_interval = 3000;
  /// Minimum distance between the last opacity reset and stage2_start.
  long stage2_reset_gap = 500;

  std::uint64_t seed = 0;
  int workers = 1;
  int tile_size = kDefaultTileSize;
  Vec3 background = Vec3::Zero();
  long log_interval = 10;
  long instrument_interval = 100;

  double instance_opacity_lr() const { return lr_instance_opacity < 0.0 ? lr_opacity : lr_instance_opacity; }

  /// Last iteration at which stage 1 resets opacities, or 0 if none.
  long last_opacity_reset() const {
    if (opacity_reset_interval <= 0) return 0;
    const long limit = std::min(densify_until - 1, stage2_start);
    return limit < opacity_reset_interval ? 0 : (limit / opacity_reset_interval) * opacity_reset_interval;
  }

  void validate() const {
    const auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
    if (!(stage2_start > 0 && stage2_start < total_iters)) fail("need 0 < stage2_start < total_iters");
    if (m_objects < 1) fail("m_objects must be >= 1");
    if (!(lambda_o >= 0.0 && lambda_ssim >= 0.0)) fail("loss weights must be non-negative");
    for (double lr : {lr_position_init, lr_position_final, lr_sh, lr_opacity, lr_rotation, lr_scale}) {
      if (!(lr >= 0.0) || !std::isfinite(lr)) fail("learning rates must be finite and non-negative");
    }
    if (lr_position_init > 0.0 && !(lr_position_final > 0.0)) fail("lr_position_final must be > 0");
    if (densify_interval < 1 || log_interval < 1 || instrument_interval < 1) fail("intervals must be >= 1");
    if (densify_until > stage2_start + 1) fail("densification must end before stage 2");
    if (const long last = last_opacity_reset(); last > 0 && stage2_start - last < stage2_reset_gap) {
      fail("stage2_start " + std::to_string(stage2_start) + " is within " +
           std::to_string(stage2_reset_gap) + " iterations of the opacity reset at " +
           std::to_string(last));
    }
    if (workers < 1) fail("workers must be >= 1");
  }

  /// Same schedule with every milestone scaled by total / total_iters.
  /// `stage2` overrides the scaled stage-2 start when positive.
  TrainConfig scaled_to(long total, long stage2 = -1) const {
    if (total < 2) throw std::invalid_argument("train config: scaled total must be >= 2");
    TrainConfig c = *this;
    const double r = static_cast<double>(total) / static_cast<double>(total_iters);
    const auto sc = [r](long v) { return std::max(1L, std::lround(static_cast<double>(v) * r)); };
    c.total_iters = total;
    c.stage2_start = stage2 > 0 ? stage2 : sc(stage2_start);
    c.densify_from = sc(densify_from);
    c.densify_interval = sc(densify_interval);
    c.densify_until = sc(densify_until);
    c.opacity_reset_interval = opacity_reset_interval > 0 ? sc(opacity_reset_interval) : 0;
    c.stage2_reset_gap = sc(stage2_reset_gap);
    return c;
  }
};

/// One line of the metrics log.
struct MetricsRecord {
  long iteration = 0;
  int stage = 1;
  double l1 = 0.0;
  double ssim = 0.0;
  double obj = 0.0;
  double total = 0.0;
  double psnr = 0.0;
  std::size_t count = 0;
};

// ---------------------------------------------------------------------------
// Densification

/// Running average of screen-space gradient norms per primitive.
struct DensifyStats {
  std::vector<double> grad_sum;
  std::vector<long> visible_count;

  void reset(std::size_t n) {
    grad_sum.assign(n, 0.0);
    visible_count.assign(n, 0);
  }

  void accumulate(const GradientBuffer& g, int width, int height) {
    if (grad_sum.size() != g.size()) reset(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!g.visible[i]) continue;
      const double gx = g.screen_means[2 * i] * 0.5 * width;
      const double gy = g.screen_means[2 * i + 1] * 0.5 * height;
      grad_sum[i] += std::hypot(gx, gy);
      ++visible_count[i];
    }
  }

  double average(std::size_t i) const {
    return visible_count[i] > 0 ? grad_sum[i] / static_cast<double>(visible_count[i]) : 0.0;
  }
};

/// Entry k of the new cloud came from old index parents[k]; fresh[k] marks
/// newly created primitives whose optimizer moments start at zero.
struct DensifyResult {
  std::vector<std::size_t> parents;
  std::vector<bool> fresh;
  std::size_t cloned = 0;
  std::size_t split = 0;
  std::size_t pruned = 0;
};

namespace detail {

inline void copy_primitive(const GaussianCloud& src, std::size_t i, GaussianCloud& dst, std::size_t k) {
  const std::size_t sh_w = 3 * static_cast<std::size_t>(src.sh_count());
  std::copy_n(src.positions.begin() + 3 * i, 3, dst.positions.begin() + 3 * k);
  std::copy_n(src.sh_coeffs.begin() + sh_w * i, sh_w, dst.sh_coeffs.begin() + sh_w * k);
  dst.opacity_logits[k] = src.opacity_logits[i];
  dst.instance_opacity_logits[k] = src.instance_opacity_logits[i];
  std::copy_n(src.rotations.begin() + 4 * i, 4, dst.rotations.begin() + 4 * k);
  std::copy_n(src.log_scales.begin() + 3 * i, 3, dst.log_scales.begin() + 3 * k);
  dst.labels[k] = src.labels[i];
}

}  // namespace detail

/// Clone small high-gradient primitives, split large ones into two children
/// at scale / 1.6, then prune low-opacity (and optionally oversized) ones.
template <typename Rng>
DensifyResult densify_and_prune(GaussianCloud& cloud, const DensifyStats& stats, OptimizerState& state,
                                const TrainConfig& config, double extent, bool prune_large, Rng& rng) {
  const std::size_t n = cloud.size();
  if (stats.grad_sum.size() != n) throw std::invalid_argument("densify_and_prune: stale statistics");
  const double dense_scale = config.percent_dense * extent;
  const double split_factor = 1.6;

  std::vector<std::size_t> parents;
  std::vector<bool> fresh;
  std::vector<std::size_t> clones, splits;
  parents.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool hot = stats.average(i) >= config.grad_threshold;
    const double max_scale = cloud.log_scale(i).array().exp().maxCoeff();
    if (hot && max_scale <= dense_scale) clones.push_back(i);
    if (hot && max_scale > dense_scale) {
      splits.push_back(i);
      continue;
    }
    parents.push_back(i);
    fresh.push_back(false);
  }
  for (std::size_t i : clones) {
    parents.push_back(i);
    fresh.push_back(true);
  }
  const std::size_t first_child = parents.size();
  for (std::size_t i : splits) {
    for (int c = 0; c < 2; ++c) {
      parents.push_back(i);
      fresh.push_back(true);
    }
  }

  GaussianCloud next;
  next.sh_degree = cloud.sh_degree;
  next.object_count = cloud.object_count;
  next.instance_ready = cloud.instance_ready;
  next.resize(parents.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < parents.size(); ++k) {
    detail::copy_primitive(cloud, parents[k], next, k);
    if (k < first_child) continue;
    const std::size_t i = parents[k];
    const Vec3 s = cloud.log_scale(i).array().exp();
    const Vec3 offset(s.x() * normal(rng), s.y() * normal(rng), s.z() * normal(rng));
    const Vec3 pos = cloud.position(i) + quaternion_to_rotation(normalized_quaternion(cloud.rotation(i))) * offset;
    for (int a = 0; a < 3; ++a) {
      next.positions[3 * k + a] = static_cast<float>(pos[a]);
      next.log_scales[3 * k + a] = static_cast<float>(std::log(s[a] / split_factor));
    }
  }

  // Prune.
  std::vector<std::size_t> keep;
  keep.reserve(next.size());
  for (std::size_t k = 0; k < next.size(); ++k) {
    bool drop = next.opacity(k) < config.prune_opacity_threshold;
    if (prune_large && config.prune_scale_fraction > 0.0) {
      drop = drop || next.log_scale(k).array().exp().maxCoeff() > config.prune_scale_fraction * extent;
    }
    if (!drop) keep.push_back(k);
  }
  GaussianCloud kept;
  kept.sh_degree = next.sh_degree;
  kept.object_count = next.object_count;
  kept.instance_ready = next.instance_ready;
  kept.resize(keep.size());
  DensifyResult result;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    detail::copy_primitive(next, keep[k], kept, k);
    result.parents.push_back(parents[keep[k]]);
    result.fresh.push_back(fresh[keep[k]]);
  }
  result.cloned = clones.size();
  result.split = splits.size();
  result.pruned = next.size() - keep.size();
  state.remap(result.parents, result.fresh, cloud.sh_degree);
  cloud = std::move(kept);
  return result;
}

/// sigma := min(sigma, 0.01); the opacity optimizer moments restart at zero.
inline void opacity_reset(GaussianCloud& cloud, OptimizerState* state = nullptr) {
  const float cap = static_cast<float>(logit(0.01));
  for (float& v : cloud.opacity_logits) v = std::min(v, cap);
  if (state) {
    auto& m = state->at(ParamBlock::kOpacity);
    std::fill(m.first.begin(), m.first.end(), 0.0);
    std::fill(m.second.begin(), m.second.end(), 0.0);
  }
}

// ---------------------------------------------------------------------------
// Stage transition

/// Votes labels over the training views and initializes sigma* := sigma.
inline void begin_stage2(GaussianCloud& cloud, const Dataset& data, const PseudoLabelSet& labels) {
  validate_labels_for(data, labels);
  std::vector<Camera> cams;
  PseudoLabelSet train_labels;
  train_labels.object_count = labels.object_count;
  for (int v : data.train_views) {
    cams.push_back(data.cameras[v]);
    train_labels.maps.push_back(labels.maps[v]);
  }
  cloud.labels = majority_vote(cloud, cams, train_labels);
  cloud.instance_opacity_logits = cloud.opacity_logits;
  cloud.object_count = labels.object_count;
  cloud.instance_ready = true;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
  GaussianCloud cloud;
  std::vector<MetricsRecord> log;
  /// Index in the initial cloud each final primitive descends from.
  std::vector<std::size_t> origin;
  /// Cloud right after begin_stage2 (empty when stage 2 never ran).
  std::optional<GaussianCloud> stage2_entry;
  std::vector<std::size_t> stage2_entry_origin;
  long instrumentation_checks = 0;
};

/// Called after every iteration with the iteration number and the cloud.
using TrainObserver = std::function<void(long, const GaussianCloud&)>;

/// Half-diagonal-like radius of the camera centers, as used to size
/// densification and the position learning rate.
inline double camera_extent(const Dataset& data) {
  Vec3 mean = Vec3::Zero();
  for (int v : data.train_views) mean += data.cameras[v].center();
  mean /= static_cast<double>(data.train_views.size());
  double r = 0.0;
  for (int v : data.train_views) r = std::max(r, (data.cameras[v].center() - mean).norm());
  return 1.1 * std::max(r, 1e-6);
}

/// Stage 2 is skipped entirely when `appearance_only` is set; the schedule
/// is otherwise identical (baseline runs of equal length).
inline TrainResult train(const Dataset& data, const PseudoLabelSet& labels, const GaussianCloud& init,
                         const TrainConfig& config, bool appearance_only = false,
                         const TrainObserver& observer = {}) {
  config.validate();
  data.validate();
  init.validate();
  if (!appearance_only) validate_labels_for(data, labels);
  if (init.size() == 0) throw std::invalid_argument("train: empty initial cloud");

  TrainResult result;
  GaussianCloud& cloud = result.cloud;
  cloud = init;
  result.origin.resize(cloud.size());
  std::iota(result.origin.begin(), result.origin.end(), std::size_t{0});

  // Independent streams so object sampling never perturbs the view order.
  std::mt19937_64 view_rng(config.seed);
  std::mt19937_64 object_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 densify_rng(config.seed ^ 0xc2b2ae3d27d4eb4fULL);

  const double extent = camera_extent(data);
  OptimizerState optim;
  DensifyStats stats;
  stats.reset(cloud.size());
  std::vector<int> order;
  std::size_t order_pos = 0;

  LossWeights weights;
  weights.lambda_o = config.lambda_o;
  weights.lambda_ssim = config.lambda_ssim;
  weights.m_objects = config.m_objects;

  BackwardOptions bopts;
  bopts.background = config.background;
  bopts.workers = config.workers;
  bopts.tile_size = config.tile_size;

  long stage2_iters = 0;
  for (long it = 1; it <= config.total_iters; ++it) {
    const bool stage2 = !appearance_only && it > config.stage2_start;
    if (stage2 && !cloud.instance_ready) {
      begin_stage2(cloud, data, labels);
      result.stage2_entry = cloud;
      result.stage2_entry_origin = result.origin;
    }

    if (order_pos == order.size()) {
      order = data.train_views;
      std::shuffle(order.begin(), order.end(), view_rng);
      order_pos = 0;
    }
    const int view = order[order_pos++];
    const Camera& cam = data.cameras[view];
    const ImageBuffer& target = data.images[view];

    std::vector<int> sampled;
    if (stage2) sampled = sample_objects(labels.maps[view], config.m_objects, object_rng);

    RenderRequest req;
    req.camera = cam;
    req.background = config.background;
    req.object_ids = sampled;
    req.workers = config.workers;
    req.tile_size = config.tile_size;
    const RenderOutput out = render(cloud, req);

    const LossAndGrad l1 = l1_loss_grad(out.color, target);
    const LossAndGrad ssim = ssim_loss_grad(out.color, target);
    ImageBuffer color_up = l1.grad;
    for (std::size_t k = 0; k < color_up.values.size(); ++k) {
      color_up.values[k] += config.lambda_ssim * ssim.grad.values[k];
    }
    GradientBuffer grads = backward_color(cloud, cam, color_up, bopts);

    double obj_value = 0.0;
    if (stage2) {
      ++stage2_iters;
      RandomObjectLoss obj = object_loss_from_render(out, labels.maps[view], sampled);
      obj_value = obj.value;
      for (auto& [id, g] : obj.grads) {
        for (double& x : g.values) x *= config.lambda_o;
      }
      const GradientBuffer occ = backward_occupancy(cloud, cam, obj.grads, bopts);
      if (stage2_iters % config.instrument_interval == 0) {
        const auto all_zero = [](std::span<const double> s) {
          return std::all_of(s.begin(), s.end(), [](double v) { return v == 0.0; });
        };
        if (!all_zero(grads.block(ParamBlock::kInstanceOpacity)) ||
            !all_zero(occ.block(ParamBlock::kOpacity)) || !all_zero(occ.block(ParamBlock::kSh))) {
          throw std::logic_error("train: gradient path separation violated at iteration " +
                                 std::to_string(it));
        }
        ++result.instrumentation_checks;
      }
      grads = accumulate_geometry(grads, occ);
    }

    const bool densifying = !stage2 && it < config.densify_until;
    if (densifying) stats.accumulate(grads, cam.width, cam.height);

    LearningRates lrs;
    lrs[ParamBlock::kPosition] =
        extent * exponential_lr(config.lr_position_init, config.lr_position_final, it, config.total_iters);
    lrs[ParamBlock::kSh] = config.lr_sh;
    lrs[ParamBlock::kOpacity] = config.lr_opacity;
    lrs[ParamBlock::kInstanceOpacity] = stage2 ? config.instance_opacity_lr() : 0.0;
    lrs[ParamBlock::kRotation] = config.lr_rotation;
    lrs[ParamBlock::kLogScale] = config.lr_scale;
    try {
      adam_step(cloud, grads, optim, lrs);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("train: iteration " + std::to_string(it) + " (view " +
                               std::to_string(view) + "): " + e.what());
    }

    if (densifying) {
      if (it > config.densify_from && it % config.densify_interval == 0) {
        const bool prune_large = config.opacity_reset_interval > 0 && it > config.opacity_reset_interval;
        const DensifyResult d =
            densify_and_prune(cloud, stats, optim, config, extent, prune_large, densify_rng);
        std::vector<std::size_t> origin(d.parents.size());
        for (std::size_t k = 0; k < d.parents.size(); ++k) origin[k] = result.origin[d.parents[k]];
        result.origin = std::move(origin);
        stats.reset(cloud.size());
      }
      if (config.opacity_reset_interval > 0 && it % config.opacity_reset_interval == 0) {
        opacity_reset(cloud, &optim);
      }
    }

    if (it % config.log_interval == 0 || it == config.total_iters) {
      MetricsRecord rec;
      rec.iteration = it;
      rec.stage = stage2 ? 2 : 1;
      rec.l1 = l1.value;
      rec.ssim = ssim.value;
      rec.obj = obj_value;
      rec.total = total_loss(l1.value, ssim.value, obj_value, weights,
                             stage2 ? Stage::kInstance : Stage::kAppearance);
      rec.psnr = psnr(out.color, target);
      rec.count = cloud.size();
      result.log.push_back(rec);
    }
    if (observer) observer(it, cloud);
  }
  return result;
}

}  // namespace dualsplat

#endif  // DUALSPLAT_TRAINER_HPP_
