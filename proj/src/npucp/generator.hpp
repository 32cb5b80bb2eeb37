// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npucp/graph.hpp"

namespace npucp {

struct LayerShape {
  OpKind op = OpKind::kConv;
  int kernel = 1;
  int stride = 1;
  int64_t out_c = 1;  // ignored by channel-local ops
};

// Sequential network over an input of h x w x c; the last tensor is the model output.
NetGraph build_chain(const std::vector<LayerShape>& layers, int64_t h, int64_t w, int64_t c);

// Random valid network. With `branches`, adds elementwise-add and hadamard joins over earlier tensors.
NetGraph random_network(uint64_t seed, int layers, bool branches);

struct GenOptions {
  uint64_t seed = 1;
  int layers = 30;
  int64_t height = 32;
  int64_t width = 32;
  int64_t channels = 16;
};

// Presets: chain, residual, depthwise, uneven, mobilenetv2-prefix, random.
NetGraph generate_preset(const std::string& preset, const GenOptions& options);
std::vector<std::string> preset_names();

}  // namespace npucp
