// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Umbrella header.

#ifndef DUALSPLAT_HPP_
#define DUALSPLAT_HPP_

#include "dualsplat/adam.hpp"
#include "dualsplat/backward.hpp"
#include "dualsplat/dataset.hpp"
#include "dualsplat/image.hpp"
#include "dualsplat/io/checkpoint.hpp"
#include "dualsplat/io/config.hpp"
#include "dualsplat/io/manifest.hpp"
#include "dualsplat/io/metrics.hpp"
#include "dualsplat/io/png.hpp"
#include "dualsplat/io/provider.hpp"
#include "dualsplat/labeling.hpp"
#include "dualsplat/losses.hpp"
#include "dualsplat/oracle.hpp"
#include "dualsplat/raster.hpp"
#include "dualsplat/scene.hpp"
#include "dualsplat/segquery.hpp"
#include "dualsplat/synth.hpp"
#include "dualsplat/trainer.hpp"

#endif  // DUALSPLAT_HPP_
