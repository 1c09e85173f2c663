// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Tile-based forward rasterizer. One compositing pass produces the color
// image, the per-object instance occupancy maps (which reuse the color
// branch's transmittance and 2D Gaussian values), and the instance label map.

#ifndef DUALSPLAT_RASTER_HPP_
#define DUALSPLAT_RASTER_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dualsplat/scene.hpp"

namespace dualsplat {

inline constexpr double kAlphaMax = 0.99;
inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kTransmittanceMin = 1e-4;
/// Below this peak instance alpha a pixel is labeled background.
inline constexpr double kInstanceLabelFloor = 0.1;
inline constexpr int kDefaultTileSize = 16;

/// Projected splats plus per-tile index lists, front to back.
struct SortedSplatList {
  int tile_size = kDefaultTileSize;
  int tiles_x = 0;
  int tiles_y = 0;
  /// Non-culled splats in global depth order.
  std::vector<ProjectedGaussian> splats;
  /// tiles[ty * tiles_x + tx] indexes into `splats`, non-decreasing depth.
  std::vector<std::vector<std::uint32_t>> tiles;

  std::size_t tile_count() const { return tiles.size(); }
};

/// Inclusive range of tile coordinates covered by a splat's 3-sigma box.
struct TileRange {
  int x0, y0, x1, y1;
  bool empty() const { return x0 > x1 || y0 > y1; }
};

inline TileRange splat_tile_range(const ProjectedGaussian& pg, int tile_size, int tiles_x,
                                  int tiles_y, int width, int height) {
  const double lo_x = std::max(0.0, pg.mean2d.x() - pg.screen_radius);
  const double hi_x = std::min(static_cast<double>(width - 1), pg.mean2d.x() + pg.screen_radius);
  const double lo_y = std::max(0.0, pg.mean2d.y() - pg.screen_radius);
  const double hi_y = std::min(static_cast<double>(height - 1), pg.mean2d.y() + pg.screen_radius);
  if (lo_x > hi_x || lo_y > hi_y) return {0, 0, -1, -1};
  // Pixel centers are integers, so the box covers pixel columns ceil(lo)..floor(hi).
  const int px0 = static_cast<int>(std::ceil(lo_x)), px1 = static_cast<int>(std::floor(hi_x));
  const int py0 = static_cast<int>(std::ceil(lo_y)), py1 = static_cast<int>(std::floor(hi_y));
  if (px0 > px1 || py0 > py1) return {0, 0, -1, -1};
  return {std::min(px0 / tile_size, tiles_x - 1), std::min(py0 / tile_size, tiles_y - 1),
          std::min(px1 / tile_size, tiles_x - 1), std::min(py1 / tile_size, tiles_y - 1)};
}

/// Projects, depth-sorts, and bins every primitive into the tiles its
/// 3-sigma box overlaps. Ties in depth keep primitive index order.
inline SortedSplatList bin_and_sort(const GaussianCloud& cloud, const Camera& cam,
                                    int tile_size = kDefaultTileSize) {
  if (tile_size < 4) throw std::invalid_argument("bin_and_sort: tile_size must be >= 4");
  cam.validate();
  SortedSplatList out;
  out.tile_size = tile_size;
  out.tiles_x = (cam.width + tile_size - 1) / tile_size;
  out.tiles_y = (cam.height + tile_size - 1) / tile_size;
  out.tiles.resize(static_cast<std::size_t>(out.tiles_x) * out.tiles_y);

  out.splats.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (auto pg = project_gaussian(cloud, i, cam)) out.splats.push_back(*pg);
  }
  std::stable_sort(out.splats.begin(), out.splats.end(),
                   [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
                     return a.depth < b.depth;
                   });
  for (std::uint32_t s = 0; s < out.splats.size(); ++s) {
    const TileRange r = splat_tile_range(out.splats[s], tile_size, out.tiles_x, out.tiles_y,
                                         cam.width, cam.height);
    for (int ty = r.y0; ty <= r.y1; ++ty) {
      for (int tx = r.x0; tx <= r.x1; ++tx) {
        out.tiles[static_cast<std::size_t>(ty) * out.tiles_x + tx].push_back(s);
      }
    }
  }
  return out;
}

/// One blended splat as seen by a pixel; shared by both branches.
struct BlendStep {
  std::uint32_t splat = 0;  // index into the caller's splat sequence
  double gaussian = 0.0;    // G_i(v)
  double alpha = 0.0;       // min(sigma * G, 0.99)
  double transmittance = 0.0;  // T_i before this splat
  bool alpha_clamped = false;
};

/// Outputs of compositing one pixel.
struct PixelResult {
  Vec3 color = Vec3::Zero();
  /// Same order as the object id list passed in.
  std::vector<double> occupancy;
  double final_transmittance = 1.0;
  std::int32_t instance_label = 0;
  int contributors = 0;
};

/// Composites an ordered splat sequence at pixel v. `splat_at(k)` returns the
/// k-th splat front to back. When `trace` is non-null every blended splat is
/// appended to it.
template <typename SplatAt>
PixelResult composite_pixel(std::size_t count, SplatAt&& splat_at, const Vec2& v,
                            std::span<const int> object_ids, const Vec3& background,
                            std::vector<BlendStep>* trace = nullptr) {
  PixelResult px;
  px.occupancy.assign(object_ids.size(), 0.0);
  double transmittance = 1.0;
  double best_instance_alpha = -1.0;
  std::int32_t best_label = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const ProjectedGaussian& pg = splat_at(k);
    const auto g = splat_support_value(pg, v);
    if (!g) continue;
    const double raw_alpha = pg.opacity * *g;
    const double alpha = std::min(raw_alpha, kAlphaMax);
    if (alpha < kAlphaMin) continue;
    const double next_t = transmittance * (1.0 - alpha);
    if (next_t < kTransmittanceMin) break;

    px.color += pg.color * (alpha * transmittance);
    for (std::size_t j = 0; j < object_ids.size(); ++j) {
      if (pg.label == object_ids[j]) px.occupancy[j] += pg.instance_opacity * *g * transmittance;
    }
    const double instance_alpha = pg.instance_opacity * *g;
    if (instance_alpha > best_instance_alpha) {
      best_instance_alpha = instance_alpha;
      best_label = pg.label;
    }
    if (trace) {
      trace->push_back({static_cast<std::uint32_t>(k), *g, alpha, transmittance,
                        raw_alpha > kAlphaMax});
    }
    transmittance = next_t;
    ++px.contributors;
  }
  px.color += background * transmittance;
  px.final_transmittance = transmittance;
  px.instance_label = best_instance_alpha >= kInstanceLabelFloor ? best_label : 0;
  return px;
}

struct RenderRequest {
  Camera camera;
  Vec3 background = Vec3::Zero();
  /// Objects j whose occupancy map S_j is rendered; each in {1..C}.
  std::vector<int> object_ids;
  bool render_instance_map = false;
  int tile_size = kDefaultTileSize;
  /// Worker threads; output is identical for any value >= 1.
  int workers = 1;
};

struct RenderStats {
  /// Full-image compositing passes; every output comes from one pass.
  int compositing_passes = 0;
  /// Extra passes decoding rendered features into labels or masks.
  int decode_passes = 0;
  std::size_t visible_splats = 0;
};

struct RenderOutput {
  ImageBuffer color;
  std::map<int, ImageBuffer> occupancy;
  IdMap instance_labels;
  ImageBuffer final_transmittance;
  IdMap contributor_count;
  RenderStats stats;
};

inline void validate_object_ids(std::span<const int> ids, int object_count, const char* what) {
  for (int id : ids) {
    if (id < 1 || id > object_count) {
      throw std::invalid_argument(std::string(what) + ": object id " + std::to_string(id) +
                                  " outside {1.." + std::to_string(object_count) + "}");
    }
  }
}

/// Runs fn(tile) for every tile, spread over `workers` threads.
template <typename Fn>
void for_each_tile(std::size_t tile_count, int workers, Fn&& fn) {
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(tile_count)));
  if (n_threads <= 1) {
    for (std::size_t t = 0; t < tile_count; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int w = 0; w < n_threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t t = next++; t < tile_count; t = next++) fn(t);
    });
  }
  for (auto& th : pool) th.join();
}

/// Renders color, requested occupancy maps, and optionally the instance map.
inline RenderOutput render(const GaussianCloud& cloud, const RenderRequest& request) {
  validate_object_ids(request.object_ids, cloud.object_count, "render");
  const Camera& cam = request.camera;
  const SortedSplatList list = bin_and_sort(cloud, cam, request.tile_size);

  RenderOutput out;
  out.color = ImageBuffer(cam.width, cam.height, 3);
  out.final_transmittance = ImageBuffer(cam.width, cam.height, 1);
  out.contributor_count = IdMap(cam.width, cam.height, 1);
  if (request.render_instance_map) out.instance_labels = IdMap(cam.width, cam.height, 1);
  std::vector<ImageBuffer*> occ;
  for (int id : request.object_ids) {
    auto [it, inserted] = out.occupancy.try_emplace(id, ImageBuffer(cam.width, cam.height, 1));
    occ.push_back(&it->second);
  }

  for_each_tile(list.tile_count(), request.workers, [&](std::size_t t) {
    const auto& ids = list.tiles[t];
    const int tx = static_cast<int>(t % list.tiles_x), ty = static_cast<int>(t / list.tiles_x);
    const int x_end = std::min(cam.width, (tx + 1) * list.tile_size);
    const int y_end = std::min(cam.height, (ty + 1) * list.tile_size);
    const auto splat_at = [&](std::size_t k) -> const ProjectedGaussian& {
      return list.splats[ids[k]];
    };
    for (int y = ty * list.tile_size; y < y_end; ++y) {
      for (int x = tx * list.tile_size; x < x_end; ++x) {
        const PixelResult px = composite_pixel(ids.size(), splat_at, Vec2(x, y),
                                               request.object_ids, request.background);
        for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = px.color[c];
        out.final_transmittance.at(x, y) = px.final_transmittance;
        out.contributor_count.at(x, y) = px.contributors;
        for (std::size_t j = 0; j < occ.size(); ++j) occ[j]->at(x, y) = px.occupancy[j];
        if (request.render_instance_map) out.instance_labels.at(x, y) = px.instance_label;
      }
    }
  });
  out.stats.compositing_passes = 1;
  out.stats.visible_splats = list.splats.size();
  return out;
}

}  // namespace dualsplat

#endif  // DUALSPLAT_RASTER_HPP_
