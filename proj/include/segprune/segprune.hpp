// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segprune/diversifier.hpp"
#include "segprune/error.hpp"
#include "segprune/eval.hpp"
#include "segprune/fixture.hpp"
#include "segprune/geometry.hpp"
#include "segprune/pipeline.hpp"
#include "segprune/saliency.hpp"
#include "segprune/scene_io.hpp"
