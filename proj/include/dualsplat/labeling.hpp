// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Lifts per-view instance ID maps onto primitives: project each mean into
// every view, read the ID at the nearest pixel, and take the majority.

#ifndef DUALSPLAT_LABELING_HPP_
#define DUALSPLAT_LABELING_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualsplat/image.hpp"
#include "dualsplat/scene.hpp"

namespace dualsplat {

/// Per-view ID maps aligned with the dataset cameras. 0 is background.
struct PseudoLabelSet {
  std::vector<IdMap> maps;
  int object_count = 0;

  void validate() const {
    for (std::size_t v = 0; v < maps.size(); ++v) {
      if (maps[v].channels != 1) {
        throw std::invalid_argument("pseudo labels: view " + std::to_string(v) + " is not single-channel");
      }
      for (auto id : maps[v].values) {
        if (id < 0 || id > object_count) {
          throw std::invalid_argument("pseudo labels: view " + std::to_string(v) + " has id " +
                                      std::to_string(id) + " outside {0.." +
                                      std::to_string(object_count) + "}");
        }
      }
    }
  }
};

/// Votes cast for one primitive.
struct VoteTally {
  /// histogram[k] = number of visible views reading id k.
  std::vector<int> histogram;
  std::vector<int> visible_views;

  int winner() const {
    int best = 0;
    for (int k = 1; k < static_cast<int>(histogram.size()); ++k) {
      if (histogram[k] > histogram[best]) best = k;
    }
    return best;
  }
};

/// ID at the nearest pixel to mu's projection, or nullopt if the point is
/// behind the near plane or lands outside the image.
inline std::optional<std::int32_t> project_and_read(const Vec3& mu, const Camera& cam,
                                                    const IdMap& id_map) {
  if (id_map.width != cam.width || id_map.height != cam.height) {
    throw std::invalid_argument("project_and_read: ID map does not match camera resolution");
  }
  const Vec3 t = cam.to_view(mu);
  if (!(t.z() > kNearPlane)) return std::nullopt;
  const double px = std::floor(cam.fx * t.x() / t.z() + cam.cx + 0.5);
  const double py = std::floor(cam.fy * t.y() / t.z() + cam.cy + 0.5);
  if (!(px >= 0.0 && px <= cam.width - 1 && py >= 0.0 && py <= cam.height - 1)) return std::nullopt;
  return id_map.at(static_cast<int>(px), static_cast<int>(py));
}

inline VoteTally tally_votes(const Vec3& mu, const std::vector<Camera>& cameras,
                             const PseudoLabelSet& labels) {
  VoteTally tally;
  tally.histogram.assign(static_cast<std::size_t>(labels.object_count) + 1, 0);
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    if (auto id = project_and_read(mu, cameras[v], labels.maps[v])) {
      if (*id < 0 || *id > labels.object_count) {
        throw std::invalid_argument("majority_vote: id " + std::to_string(*id) + " outside label range");
      }
      ++tally.histogram[*id];
      tally.visible_views.push_back(static_cast<int>(v));
    }
  }
  return tally;
}

/// l = argmax_k votes(k); ties go to the smallest id, unseen primitives get 0.
inline std::vector<std::int32_t> majority_vote(const GaussianCloud& cloud,
                                               const std::vector<Camera>& cameras,
                                               const PseudoLabelSet& labels) {
  if (cameras.empty()) throw std::invalid_argument("majority_vote: need at least one view");
  if (labels.maps.size() != cameras.size()) {
    throw std::invalid_argument("majority_vote: " + std::to_string(labels.maps.size()) +
                                " ID maps for " + std::to_string(cameras.size()) + " views");
  }
  std::vector<std::int32_t> out(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out[i] = tally_votes(cloud.position(i), cameras, labels).winner();
  }
  return out;
}

}  // namespace dualsplat

#endif  // DUALSPLAT_LABELING_HPP_
