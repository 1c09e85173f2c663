// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DUALSPLAT_DATASET_HPP_
#define DUALSPLAT_DATASET_HPP_

#include <stdexcept>
#include <string>
#include <vector>

#include "dualsplat/image.hpp"
#include "dualsplat/labeling.hpp"
#include "dualsplat/scene.hpp"

namespace dualsplat {

/// Posed images. Pseudo labels are indexed by the same view index.
struct Dataset {
  std::vector<Camera> cameras;
  std::vector<ImageBuffer> images;
  std::vector<int> train_views;
  std::vector<int> eval_views;

  void validate() const {
    if (cameras.size() != images.size()) {
      throw std::invalid_argument("dataset: " + std::to_string(cameras.size()) + " cameras for " +
                                  std::to_string(images.size()) + " images");
    }
    for (std::size_t v = 0; v < cameras.size(); ++v) {
      cameras[v].validate();
      if (images[v].width != cameras[v].width || images[v].height != cameras[v].height ||
          images[v].channels != 3) {
        throw std::invalid_argument("dataset: image " + std::to_string(v) +
                                    " does not match its camera resolution");
      }
    }
    for (const auto* split : {&train_views, &eval_views}) {
      for (int v : *split) {
        if (v < 0 || v >= static_cast<int>(cameras.size())) {
          throw std::invalid_argument("dataset: split references missing view " + std::to_string(v));
        }
      }
    }
    if (train_views.empty()) throw std::invalid_argument("dataset: no training views");
  }
};

inline void validate_labels_for(const Dataset& data, const PseudoLabelSet& labels) {
  labels.validate();
  if (labels.maps.size() != data.cameras.size()) {
    throw std::invalid_argument("pseudo labels: " + std::to_string(labels.maps.size()) +
                                " ID maps for " + std::to_string(data.cameras.size()) + " views");
  }
  for (std::size_t v = 0; v < labels.maps.size(); ++v) {
    if (labels.maps[v].width != data.cameras[v].width ||
        labels.maps[v].height != data.cameras[v].height) {
      throw std::invalid_argument("pseudo labels: view " + std::to_string(v) +
                                  " resolution differs from its image");
    }
  }
}

}  // namespace dualsplat

#endif  // DUALSPLAT_DATASET_HPP_
