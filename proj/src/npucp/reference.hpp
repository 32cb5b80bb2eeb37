// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "npucp/graph.hpp"

namespace npucp {

// Dense HWC integer tensor (no channel padding).
struct HostTensor {
  int64_t h = 0, w = 0, c = 0;
  std::vector<int32_t> data;

  HostTensor() = default;
  HostTensor(int64_t h_, int64_t w_, int64_t c_) : h(h_), w(w_), c(c_), data(h_ * w_ * c_, 0) {}

  int32_t& at(int64_t y, int64_t x, int64_t ch) { return data[(y * w + x) * c + ch]; }
  int32_t at(int64_t y, int64_t x, int64_t ch) const { return data[(y * w + x) * c + ch]; }
  bool operator==(const HostTensor&) const = default;
};

// Weights laid out (out_c, fh, fw, in_c); channel-local ops use in_c = 1.
struct ParamData {
  int64_t out_c = 0, taps = 0, in_c = 0;
  std::vector<int32_t> weights;
  std::vector<int32_t> bias;

  int32_t weight(int64_t co, int64_t tap, int64_t ci) const {
    return weights[(co * taps + tap) * in_c + ci];
  }
};

struct NetworkData {
  std::map<int, HostTensor> inputs;  // model-input tensor index -> values
  std::map<int, ParamData> params;   // parameter tensor index -> values
};

// 32-bit accumulators including bias, before requantization.
HostTensor reference_conv(const LayerGeometry& g, const HostTensor& ifmap, const ParamData& params);

int32_t requantize(int64_t acc, int shift);

// Output of one layer after requantization. `acts` holds the activation inputs in order.
HostTensor reference_layer(const NetGraph& graph, int layer, const std::vector<const HostTensor*>& acts,
                           const ParamData* params);

// Every tensor value of the network, by tensor index.
std::map<int, HostTensor> reference_network(const NetGraph& graph, const NetworkData& data);

NetworkData generate_network_data(const NetGraph& graph, uint64_t seed);

// Little-endian element bytes, elem_bytes per value, channels padded with zeros.
std::vector<uint8_t> pack_lines(const HostTensor& t, int elem_bytes, int64_t word_bytes, int64_t first_line,
                                int64_t line_count);
std::vector<uint8_t> pack_params(const ParamData& p, int64_t word_bytes);

}  // namespace npucp
