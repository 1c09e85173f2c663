// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DUALSPLAT_ADAM_HPP_
#define DUALSPLAT_ADAM_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualsplat/backward.hpp"
#include "dualsplat/scene.hpp"

namespace dualsplat {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;
};

/// One bias-corrected Adam update. `step` is the 1-based step index.
template <std::floating_point Real>
void adam_update(std::span<Real> params, std::span<const double> grads, AdamMoments& moments,
                 double lr, long step, const AdamHyper& hyper = {}) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_update: shape mismatch");
  if (step < 1) throw std::invalid_argument("adam_update: step must be >= 1");
  moments.first.resize(params.size(), 0.0);
  moments.second.resize(params.size(), 0.0);
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    double& m = moments.first[k];
    double& v = moments.second[k];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params[k] = static_cast<Real>(static_cast<double>(params[k]) - lr * m_hat / (std::sqrt(v_hat) + hyper.eps));
  }
}

/// Learning rate per parameter block; zero leaves a block untouched.
struct LearningRates {
  std::array<double, kAllParamBlocks.size()> rate{};
  double& operator[](ParamBlock b) { return rate[static_cast<std::size_t>(b)]; }
  double operator[](ParamBlock b) const { return rate[static_cast<std::size_t>(b)]; }
};

/// Moments and step counters for every parameter block of a cloud. Each
/// block counts its own steps, so a block enabled late starts fresh.
struct OptimizerState {
  std::array<AdamMoments, kAllParamBlocks.size()> moments;
  std::array<long, kAllParamBlocks.size()> steps{};
  AdamHyper hyper;

  long step(ParamBlock b) const { return steps[static_cast<std::size_t>(b)]; }

  AdamMoments& at(ParamBlock b) { return moments[static_cast<std::size_t>(b)]; }
  const AdamMoments& at(ParamBlock b) const { return moments[static_cast<std::size_t>(b)]; }

  /// Reorders moments after densification: entry k of the new cloud takes
  /// the moments of parents[k] when fresh[k] is false, zeros otherwise.
  void remap(const std::vector<std::size_t>& parents, const std::vector<bool>& fresh,
             int sh_degree) {
    for (ParamBlock b : kAllParamBlocks) {
      const std::size_t w = static_cast<std::size_t>(block_width(b, sh_degree));
      auto& mom = at(b);
      if (mom.first.empty()) continue;
      AdamMoments next;
      next.first.assign(parents.size() * w, 0.0);
      next.second.assign(parents.size() * w, 0.0);
      for (std::size_t k = 0; k < parents.size(); ++k) {
        if (fresh[k]) continue;
        for (std::size_t c = 0; c < w; ++c) {
          next.first[k * w + c] = mom.first[parents[k] * w + c];
          next.second[k * w + c] = mom.second[parents[k] * w + c];
        }
      }
      mom = std::move(next);
    }
  }
};

/// Adam over every block with a non-zero rate, then quaternion
/// renormalization. A non-finite gradient aborts before anything changes.
inline void adam_step(GaussianCloud& cloud, const GradientBuffer& grads, OptimizerState& state,
                      const LearningRates& lrs) {
  for (ParamBlock b : kAllParamBlocks) {
    if (lrs[b] == 0.0) continue;
    if (grads.block(b).size() != cloud.block(b).size()) {
      throw std::invalid_argument(std::string("adam_step: shape mismatch in ") + block_name(b));
    }
    for (double g : grads.block(b)) {
      if (!std::isfinite(g)) {
        throw std::runtime_error(std::string("adam_step: non-finite gradient in ") + block_name(b));
      }
    }
  }
  for (ParamBlock b : kAllParamBlocks) {
    if (lrs[b] == 0.0) continue;
    const long step = ++state.steps[static_cast<std::size_t>(b)];
    adam_update(cloud.block(b), grads.block(b), state.at(b), lrs[b], step, state.hyper);
  }
  normalize_rotations(cloud);
}

/// exp-interpolated learning rate from lr_init to lr_final over max_steps.
inline double exponential_lr(double lr_init, double lr_final, long step, long max_steps) {
  if (max_steps <= 0) return lr_init;
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(max_steps), 0.0, 1.0);
  return std::exp(std::log(lr_init) * (1.0 - t) + std::log(lr_final) * t);
}

}  // namespace dualsplat

#endif  // DUALSPLAT_ADAM_HPP_
