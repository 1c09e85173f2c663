// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Text manifests for posed images and pseudo-label ID maps. Paths inside a
// manifest are relative to the manifest's directory.
//
// Scene manifest, one record per line:
//   view <image.png> <train|eval> <width> <height> <fx> <fy> <cx> <cy> <R row-major x9> <t x3>
//   gt <view index> <object id> <mask.png>
//   init <checkpoint.ply>
//
// Labels manifest:
//   object_count <C>
//   map <view index> <ids.png>

#ifndef DUALSPLAT_IO_MANIFEST_HPP_
#define DUALSPLAT_IO_MANIFEST_HPP_

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dualsplat/dataset.hpp"
#include "dualsplat/io/png.hpp"
#include "dualsplat/labeling.hpp"

namespace dualsplat::io {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SceneManifest {
  Dataset dataset;
  /// Resolved image path per view.
  std::vector<std::string> image_paths;
  /// Ground-truth object masks keyed by (view, object id).
  std::map<std::pair<int, int>, BinaryMask> gt_masks;
  std::optional<std::string> init_checkpoint;

  /// Largest object id with a ground-truth mask (0 when none).
  int gt_object_count() const {
    int c = 0;
    for (const auto& [key, m] : gt_masks) c = std::max(c, key.second);
    return c;
  }
};

namespace detail {

namespace fs = std::filesystem;

inline std::string resolve(const fs::path& base, const std::string& rel) {
  const fs::path p(rel);
  return (p.is_absolute() ? p : base / p).lexically_normal().string();
}

inline std::string relative_to(const fs::path& base, const std::string& target) {
  const fs::path rel = fs::path(target).lexically_relative(base);
  return rel.empty() ? target : rel.string();
}

inline void require_file(const std::string& path, const std::string& where) {
  if (!fs::is_regular_file(path)) throw ManifestError(where + "missing file " + path);
}

inline std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline BinaryMask read_mask(const std::string& path) {
  const PngPixels px = read_png(path);
  BinaryMask m(px.width, px.height, 1);
  for (std::size_t p = 0; p < m.values.size(); ++p) m.values[p] = px.samples[p * px.channels] != 0 ? 1 : 0;
  return m;
}

}  // namespace detail

inline void write_mask(const std::string& path, const BinaryMask& mask) {
  PngPixels px{mask.width, mask.height, 1, 8, {}};
  px.samples.reserve(mask.values.size());
  for (auto v : mask.values) px.samples.push_back(v ? 255 : 0);
  write_png(path, px);
}

inline BinaryMask read_mask(const std::string& path) { return detail::read_mask(path); }

inline SceneManifest load_scene_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open scene manifest " + path);
  const auto base = std::filesystem::path(path).parent_path();
  SceneManifest m;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::string kind;
    if (!(ls >> kind)) continue;
    const std::string where = path + ":" + std::to_string(line) + ": ";
    std::string extra;
    if (kind == "view") {
      std::string image, split;
      Camera cam;
      ls >> image >> split >> cam.width >> cam.height >> cam.fx >> cam.fy >> cam.cx >> cam.cy;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) ls >> cam.rotation(r, c);
      }
      ls >> cam.translation.x() >> cam.translation.y() >> cam.translation.z();
      if (!ls || (ls >> extra)) throw ManifestError(where + "malformed view record");
      if (split != "train" && split != "eval") throw ManifestError(where + "split must be train or eval");
      try {
        cam.validate();
      } catch (const std::invalid_argument& e) {
        throw ManifestError(where + e.what());
      }
      const std::string resolved = detail::resolve(base, image);
      detail::require_file(resolved, where);
      const int v = static_cast<int>(m.dataset.cameras.size());
      ImageBuffer img = read_rgb(resolved);
      if (img.width != cam.width || img.height != cam.height) {
        throw ManifestError(where + "image " + resolved + " is " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + ", camera says " + std::to_string(cam.width) + "x" +
                            std::to_string(cam.height));
      }
      (split == "train" ? m.dataset.train_views : m.dataset.eval_views).push_back(v);
      m.dataset.cameras.push_back(cam);
      m.dataset.images.push_back(std::move(img));
      m.image_paths.push_back(resolved);
    } else if (kind == "gt") {
      int view = -1, object = 0;
      std::string mask;
      if (!(ls >> view >> object >> mask) || (ls >> extra)) throw ManifestError(where + "malformed gt record");
      if (view < 0 || view >= static_cast<int>(m.dataset.cameras.size())) {
        throw ManifestError(where + "gt record references view " + std::to_string(view) +
                            " before it is declared");
      }
      if (object < 1) throw ManifestError(where + "object ids start at 1");
      const std::string resolved = detail::resolve(base, mask);
      detail::require_file(resolved, where);
      BinaryMask bm = detail::read_mask(resolved);
      if (bm.width != m.dataset.cameras[view].width || bm.height != m.dataset.cameras[view].height) {
        throw ManifestError(where + "mask resolution differs from its view");
      }
      m.gt_masks[{view, object}] = std::move(bm);
    } else if (kind == "init") {
      std::string ckpt;
      if (!(ls >> ckpt) || (ls >> extra)) throw ManifestError(where + "malformed init record");
      m.init_checkpoint = detail::resolve(base, ckpt);
      detail::require_file(*m.init_checkpoint, where);
    } else {
      throw ManifestError(where + "unknown record '" + kind + "'");
    }
  }
  try {
    m.dataset.validate();
  } catch (const std::invalid_argument& e) {
    throw ManifestError(path + ": " + e.what());
  }
  return m;
}

/// Writes the manifest text; images and masks must already exist at the
/// given paths, which are stored relative to the manifest directory.
inline void write_scene_manifest(const std::string& path, const Dataset& data,
                                 const std::vector<std::string>& image_paths,
                                 const std::map<std::pair<int, int>, std::string>& gt_mask_paths = {},
                                 const std::optional<std::string>& init_checkpoint = std::nullopt) {
  if (image_paths.size() != data.cameras.size()) throw ManifestError("write_scene_manifest: path count mismatch");
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<char> is_eval(data.cameras.size(), 0);
  for (int v : data.eval_views) is_eval[v] = 1;
  std::ostringstream out;
  out << "# view <image> <split> <w> <h> <fx> <fy> <cx> <cy> <R row-major> <t>\n";
  for (std::size_t v = 0; v < data.cameras.size(); ++v) {
    const Camera& c = data.cameras[v];
    out << "view " << detail::relative_to(base, image_paths[v]) << " " << (is_eval[v] ? "eval" : "train") << " "
        << c.width << " " << c.height << " " << detail::fmt_double(c.fx) << " " << detail::fmt_double(c.fy) << " "
        << detail::fmt_double(c.cx) << " " << detail::fmt_double(c.cy);
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) out << " " << detail::fmt_double(c.rotation(r, k));
    }
    for (int k = 0; k < 3; ++k) out << " " << detail::fmt_double(c.translation[k]);
    out << "\n";
  }
  for (const auto& [key, p] : gt_mask_paths) {
    out << "gt " << key.first << " " << key.second << " " << detail::relative_to(base, p) << "\n";
  }
  if (init_checkpoint) out << "init " << detail::relative_to(base, *init_checkpoint) << "\n";
  std::ofstream f(path);
  if (!f) throw ManifestError("cannot open " + path + " for writing");
  f << out.str();
}

inline PseudoLabelSet load_labels_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open labels manifest " + path);
  const auto base = std::filesystem::path(path).parent_path();
  PseudoLabelSet labels;
  labels.object_count = -1;
  std::map<int, IdMap> maps;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::string kind, extra;
    if (!(ls >> kind)) continue;
    const std::string where = path + ":" + std::to_string(line) + ": ";
    if (kind == "object_count") {
      if (!(ls >> labels.object_count) || (ls >> extra) || labels.object_count < 1) {
        throw ManifestError(where + "object_count must be a positive integer");
      }
    } else if (kind == "map") {
      int view = -1;
      std::string file;
      if (!(ls >> view >> file) || (ls >> extra) || view < 0) throw ManifestError(where + "malformed map record");
      const std::string resolved = detail::resolve(base, file);
      detail::require_file(resolved, where);
      if (!maps.emplace(view, read_id_map(resolved)).second) {
        throw ManifestError(where + "duplicate map for view " + std::to_string(view));
      }
    } else {
      throw ManifestError(where + "unknown record '" + kind + "'");
    }
  }
  if (labels.object_count < 1) throw ManifestError(path + ": missing object_count");
  for (int v = 0; v < static_cast<int>(maps.size()); ++v) {
    const auto it = maps.find(v);
    if (it == maps.end()) throw ManifestError(path + ": no map for view " + std::to_string(v));
    labels.maps.push_back(std::move(it->second));
  }
  try {
    labels.validate();
  } catch (const std::invalid_argument& e) {
    throw ManifestError(path + ": " + e.what());
  }
  return labels;
}

inline void write_labels_manifest(const std::string& path, int object_count, const std::vector<std::string>& map_paths) {
  const auto base = std::filesystem::path(path).parent_path();
  std::ofstream f(path);
  if (!f) throw ManifestError("cannot open " + path + " for writing");
  f << "object_count " << object_count << "\n";
  for (std::size_t v = 0; v < map_paths.size(); ++v) {
    f << "map " << v << " " << detail::relative_to(base, map_paths[v]) << "\n";
  }
}

}  // namespace dualsplat::io

#endif  // DUALSPLAT_IO_MANIFEST_HPP_
