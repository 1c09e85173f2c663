// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Consumers of a trained instance field: thresholded masks, IoU metrics,
// per-object embeddings from masked crops, and text queries.

#ifndef DUALSPLAT_SEGQUERY_HPP_
#define DUALSPLAT_SEGQUERY_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualsplat/image.hpp"
#include "dualsplat/raster.hpp"
#include "dualsplat/scene.hpp"

namespace dualsplat {

inline constexpr double kDefaultMaskThreshold = 0.5;
inline constexpr int kDefaultQueryViews = 5;

// ---------------------------------------------------------------------------
// Masks and metrics

/// mask(v) = S(v) > tau.
inline BinaryMask extract_mask(const ImageBuffer& occupancy, double tau = kDefaultMaskThreshold) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("extract_mask: tau must lie in (0,1)");
  if (occupancy.channels != 1) throw std::invalid_argument("extract_mask: occupancy must be 1-channel");
  BinaryMask m(occupancy.width, occupancy.height, 1);
  for (std::size_t k = 0; k < m.values.size(); ++k) m.values[k] = occupancy.values[k] > tau;
  return m;
}

inline BinaryMask label_mask(const IdMap& ids, int object_id) {
  BinaryMask m(ids.width, ids.height, 1);
  for (std::size_t k = 0; k < m.values.size(); ++k) m.values[k] = ids.values[k] == object_id;
  return m;
}

inline std::size_t mask_area(const BinaryMask& m) {
  return static_cast<std::size_t>(std::count_if(m.values.begin(), m.values.end(), [](auto v) { return v != 0; }));
}

/// |pred & gt| / |pred | gt|, with 0/0 = 1.
inline double iou(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t k = 0; k < pred.values.size(); ++k) {
    const bool p = pred.values[k] != 0, g = gt.values[k] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Mask pixels with a 4-neighbor outside the mask or on the image border.
inline BinaryMask mask_boundary(const BinaryMask& m) {
  BinaryMask b(m.width, m.height, 1);
  const auto inside = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < m.width && y < m.height && m.at(x, y) != 0;
  };
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!inside(x, y)) continue;
      b.at(x, y) = !inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) || !inside(x, y + 1);
    }
  }
  return b;
}

inline double default_boundary_band(int width, int height) {
  return 0.02 * std::hypot(static_cast<double>(width), static_cast<double>(height));
}

/// IoU restricted to pixels within `band` (Euclidean, pixels) of either
/// mask's boundary. band <= 0 selects 2% of the image diagonal.
inline double boundary_iou(const BinaryMask& pred, const BinaryMask& gt, double band = -1.0) {
  require_same_shape(pred, gt, "boundary_iou");
  if (band <= 0.0) band = default_boundary_band(pred.width, pred.height);
  const int r = static_cast<int>(std::floor(band));
  const double band2 = band * band;
  BinaryMask region(pred.width, pred.height, 1);
  for (const BinaryMask* m : {&pred, &gt}) {
    const BinaryMask edge = mask_boundary(*m);
    for (int y = 0; y < edge.height; ++y) {
      for (int x = 0; x < edge.width; ++x) {
        if (!edge.at(x, y)) continue;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int px = x + dx, py = y + dy;
            if (px < 0 || py < 0 || px >= edge.width || py >= edge.height) continue;
            if (dx * dx + dy * dy <= band2) region.at(px, py) = 1;
          }
        }
      }
    }
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t k = 0; k < region.values.size(); ++k) {
    if (!region.values[k]) continue;
    const bool p = pred.values[k] != 0, g = gt.values[k] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Label of the primitive with the largest blending weight alpha_i T_i at
/// each pixel; 0 where nothing blends. Labels must already be assigned.
inline IdMap max_weight_label_map(const GaussianCloud& cloud, const Camera& cam,
                                  const Vec3& background = Vec3::Zero()) {
  const SortedSplatList list = bin_and_sort(cloud, cam, kDefaultTileSize);
  IdMap out(cam.width, cam.height, 1);
  std::vector<BlendStep> trace;
  for (std::size_t t = 0; t < list.tile_count(); ++t) {
    const auto& ids = list.tiles[t];
    const int tx = static_cast<int>(t % list.tiles_x), ty = static_cast<int>(t / list.tiles_x);
    const int x_end = std::min(cam.width, (tx + 1) * list.tile_size);
    const int y_end = std::min(cam.height, (ty + 1) * list.tile_size);
    const auto splat_at = [&](std::size_t k) -> const ProjectedGaussian& { return list.splats[ids[k]]; };
    for (int y = ty * list.tile_size; y < y_end; ++y) {
      for (int x = tx * list.tile_size; x < x_end; ++x) {
        trace.clear();
        composite_pixel(ids.size(), splat_at, Vec2(x, y), std::span<const int>(), background, &trace);
        double best = 0.0;
        int label = 0;
        for (const BlendStep& s : trace) {
          const double w = s.alpha * s.transmittance;
          if (w > best) {
            best = w;
            label = splat_at(s.splat).label;
          }
        }
        out.at(x, y) = label;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings

/// Image/text encoder with a fixed output dimension.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dimension() const = 0;
  /// Crop resolution the encoder expects.
  virtual int input_width() const = 0;
  virtual int input_height() const = 0;
  virtual std::vector<double> embed_image(const ImageBuffer& crop) = 0;
  virtual std::vector<double> embed_text(const std::string& prompt) = 0;
};

namespace detail {

inline std::vector<double> normalized(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (!(n > 0.0)) throw std::invalid_argument("embedding has zero norm");
  for (double& x : v) x /= n;
  return v;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic in-process encoder. Images embed to their mean color over
/// non-black pixels, followed by zeros. Text embeds a named color or an
/// exact "#rrggbb" watermark to the same color vector; any other prompt
/// gets a hash-seeded pseudo-random vector.
class StubEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit StubEmbeddingProvider(int dimension = 8, int input_size = 32)
      : dim_(dimension), input_size_(input_size) {
    if (dim_ < 3) throw std::invalid_argument("stub embedding: dimension must be >= 3");
    if (input_size_ < 1) throw std::invalid_argument("stub embedding: bad input size");
  }

  int dimension() const override { return dim_; }
  int input_width() const override { return input_size_; }
  int input_height() const override { return input_size_; }

  std::vector<double> embed_image(const ImageBuffer& crop) override {
    if (crop.channels != 3) throw std::invalid_argument("stub embedding: crop must be RGB");
    Vec3 sum = Vec3::Zero();
    std::size_t n = 0;
    for (int y = 0; y < crop.height; ++y) {
      for (int x = 0; x < crop.width; ++x) {
        const Vec3 c(crop.at(x, y, 0), crop.at(x, y, 1), crop.at(x, y, 2));
        if (c.maxCoeff() <= 0.0) continue;
        sum += c;
        ++n;
      }
    }
    if (n == 0) throw std::invalid_argument("stub embedding: crop has no foreground pixels");
    return color_vector(sum / static_cast<double>(n));
  }

  std::vector<double> embed_text(const std::string& prompt) override {
    if (auto c = parse_color(prompt)) return color_vector(*c);
    std::mt19937_64 rng(detail::fnv1a(prompt));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(dim_));
    for (double& x : v) x = normal(rng);
    return detail::normalized(std::move(v));
  }

  std::vector<double> color_vector(const Vec3& rgb) const {
    std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
    for (int k = 0; k < 3; ++k) v[k] = rgb[k];
    return detail::normalized(std::move(v));
  }

  static std::optional<Vec3> parse_color(const std::string& prompt) {
    static const std::map<std::string, Vec3> named = {
        {"red", {0.9, 0.15, 0.1}},     {"green", {0.1, 0.8, 0.2}},  {"blue", {0.15, 0.25, 0.95}},
        {"yellow", {0.95, 0.85, 0.1}}, {"magenta", {0.85, 0.2, 0.85}}, {"cyan", {0.1, 0.85, 0.85}},
        {"orange", {0.95, 0.55, 0.1}}, {"gray", {0.6, 0.6, 0.6}}};
    std::string p;
    for (char ch : prompt) p += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (auto it = named.find(p); it != named.end()) return it->second;
    if (p.size() == 7 && p[0] == '#' &&
        std::all_of(p.begin() + 1, p.end(), [](unsigned char ch) { return std::isxdigit(ch); })) {
      Vec3 c;
      for (int k = 0; k < 3; ++k) c[k] = std::stoi(p.substr(1 + 2 * k, 2), nullptr, 16) / 255.0;
      return c;
    }
    return std::nullopt;
  }

 private:
  int dim_;
  int input_size_;
};

/// Unit-norm descriptor per object id.
struct ObjectEmbeddingPool {
  std::map<int, std::vector<double>> descriptors;
  int views_per_object = kDefaultQueryViews;

  bool empty() const { return descriptors.empty(); }
  int dimension() const { return descriptors.empty() ? 0 : static_cast<int>(descriptors.begin()->second.size()); }

  void validate() const {
    for (const auto& [id, f] : descriptors) {
      if (static_cast<int>(f.size()) != dimension()) throw std::invalid_argument("embedding pool: mixed dimensions");
      double n = 0.0;
      for (double x : f) n += x * x;
      if (std::abs(std::sqrt(n) - 1.0) > 1e-6) throw std::invalid_argument("embedding pool: descriptor not unit norm");
    }
  }
};

/// Bilinear resample with pixel centers at integer coordinates.
inline ImageBuffer resize_bilinear(const ImageBuffer& src, int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("resize_bilinear: bad size");
  ImageBuffer out(width, height, src.channels);
  const double sx = static_cast<double>(src.width) / width, sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        out.at(x, y, c) = (1 - wy) * ((1 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c)) +
                          wy * ((1 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c));
      }
    }
  }
  return out;
}

/// Masked crop: tight bounding box plus 5% padding, background zeroed,
/// padded to a square and resized to width x height.
inline ImageBuffer crop_object(const ImageBuffer& image, const BinaryMask& mask, int width, int height) {
  require_same_size(image, mask, "crop_object");
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw std::invalid_argument("crop_object: empty mask");
  const int bw = x1 - x0 + 1, bh = y1 - y0 + 1;
  const int pad_x = static_cast<int>(std::ceil(0.05 * bw)), pad_y = static_cast<int>(std::ceil(0.05 * bh));
  const int side = std::max(bw + 2 * pad_x, bh + 2 * pad_y);
  const int ox = x0 - (side - bw) / 2, oy = y0 - (side - bh) / 2;
  ImageBuffer square(side, side, image.channels);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const int sx = ox + x, sy = oy + y;
      if (sx < 0 || sy < 0 || sx >= image.width || sy >= image.height || !mask.at(sx, sy)) continue;
      for (int c = 0; c < image.channels; ++c) square.at(x, y, c) = image.at(sx, sy, c);
    }
  }
  return resize_bilinear(square, width, height);
}

/// Renders S_j in every view and returns up to n view indices ordered by
/// mask area at tau = 0.5 (ties by view index); views with empty masks are
/// never selected.
inline std::vector<int> select_views(const GaussianCloud& cloud, const std::vector<Camera>& cameras,
                                     int object_id, int n) {
  if (n < 1) throw std::invalid_argument("select_views: n must be >= 1");
  std::vector<std::pair<std::size_t, int>> ranked;
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    RenderRequest req;
    req.camera = cameras[v];
    req.object_ids = {object_id};
    const std::size_t area = mask_area(extract_mask(render(cloud, req).occupancy.at(object_id)));
    if (area > 0) ranked.emplace_back(area, static_cast<int>(v));
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> out;
  for (std::size_t k = 0; k < ranked.size() && k < static_cast<std::size_t>(n); ++k) out.push_back(ranked[k].second);
  return out;
}

/// f = normalize(mean of provider embeddings of the masked crops).
inline std::vector<double> aggregate_embedding(const std::vector<ImageBuffer>& images,
                                               const std::vector<BinaryMask>& masks,
                                               EmbeddingProvider& provider) {
  if (images.size() != masks.size()) throw std::invalid_argument("aggregate_embedding: images/masks mismatch");
  std::vector<double> sum(static_cast<std::size_t>(provider.dimension()), 0.0);
  int used = 0;
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (mask_area(masks[k]) == 0) continue;
    const auto e = provider.embed_image(
        crop_object(images[k], masks[k], provider.input_width(), provider.input_height()));
    if (e.size() != sum.size()) throw std::runtime_error("aggregate_embedding: provider returned wrong dimension");
    for (std::size_t d = 0; d < e.size(); ++d) sum[d] += e[d];
    ++used;
  }
  if (used == 0) throw std::invalid_argument("aggregate_embedding: object has no visible views");
  for (double& x : sum) x /= used;
  return detail::normalized(std::move(sum));
}

/// Descriptor pool over objects 1..C using each object's top-n views.
inline ObjectEmbeddingPool build_embedding_pool(const GaussianCloud& cloud, const std::vector<Camera>& cameras,
                                                EmbeddingProvider& provider, int n = kDefaultQueryViews) {
  ObjectEmbeddingPool pool;
  pool.views_per_object = n;
  for (int j = 1; j <= cloud.object_count; ++j) {
    const std::vector<int> views = select_views(cloud, cameras, j, n);
    if (views.empty()) continue;
    std::vector<ImageBuffer> images;
    std::vector<BinaryMask> masks;
    for (int v : views) {
      RenderRequest req;
      req.camera = cameras[v];
      req.object_ids = {j};
      RenderOutput r = render(cloud, req);
      masks.push_back(extract_mask(r.occupancy.at(j)));
      images.push_back(std::move(r.color));
    }
    pool.descriptors[j] = aggregate_embedding(images, masks, provider);
  }
  return pool;
}

/// argmax_j cos(q, f_j); ties go to the smallest id.
inline int query_vector(const std::vector<double>& q, const ObjectEmbeddingPool& pool) {
  if (pool.empty()) throw std::invalid_argument("query: empty embedding pool");
  double qn = 0.0;
  for (double x : q) qn += x * x;
  qn = std::sqrt(qn);
  if (!(qn > 0.0)) throw std::invalid_argument("query: zero query vector");
  int best = 0;
  double best_cos = -2.0;
  for (const auto& [id, f] : pool.descriptors) {
    if (f.size() != q.size()) throw std::invalid_argument("query: dimension mismatch");
    double dot = 0.0, fn = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      dot += q[d] * f[d];
      fn += f[d] * f[d];
    }
    const double c = dot / (qn * std::sqrt(fn));
    if (c > best_cos) {
      best_cos = c;
      best = id;
    }
  }
  return best;
}

inline int query(const std::string& prompt, const ObjectEmbeddingPool& pool, EmbeddingProvider& provider) {
  if (pool.empty()) throw std::invalid_argument("query: empty embedding pool");
  return query_vector(provider.embed_text(prompt), pool);
}

}  // namespace dualsplat

#endif  // DUALSPLAT_SEGQUERY_HPP_
