// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "treekv/analysis.hpp"
#include "treekv/attention.hpp"
#include "treekv/engine.hpp"
#include "treekv/error.hpp"
#include "treekv/harness.hpp"
#include "treekv/policies.hpp"
#include "treekv/prefill.hpp"
#include "treekv/rng.hpp"
#include "treekv/tracker.hpp"
#include "treekv/wavelet.hpp"
#include "treekv/weights.hpp"
