// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/reference.hpp"

#include <algorithm>
#include <random>

namespace npucp {

HostTensor reference_conv(const LayerGeometry& g, const HostTensor& ifmap, const ParamData& params) {
  if (ifmap.h != g.in_h || ifmap.w != g.in_w || ifmap.c != g.in_c) {
    fail(ErrorCode::kContract, "reference_conv: ifmap shape does not match layer");
  }
  const int64_t taps = int64_t{g.filter_h} * g.filter_w;
  const bool local = g.channel_local();
  if (params.out_c != g.out_c || params.taps != taps || params.in_c != (local ? 1 : g.in_c) ||
      static_cast<int64_t>(params.bias.size()) != g.out_c) {
    fail(ErrorCode::kContract, "reference_conv: parameter shape does not match layer");
  }
  if (local && g.out_c != g.in_c) fail(ErrorCode::kContract, "reference_conv: channel-local op changes channels");
  HostTensor out(g.out_h, g.out_w, g.out_c);
  for (int64_t ho = 0; ho < g.out_h; ++ho) {
    for (int64_t wo = 0; wo < g.out_w; ++wo) {
      for (int64_t co = 0; co < g.out_c; ++co) {
        int32_t acc = params.bias[co];
        for (int hf = 0; hf < g.filter_h; ++hf) {
          for (int wf = 0; wf < g.filter_w; ++wf) {
            const int64_t hi = ho * g.stride + hf;
            const int64_t wi = wo * g.stride + wf;
            const int64_t tap = int64_t{hf} * g.filter_w + wf;
            if (local) {
              acc += params.weight(co, tap, 0) * ifmap.at(hi, wi, co);
            } else {
              for (int64_t ci = 0; ci < g.in_c; ++ci) {
                acc += params.weight(co, tap, ci) * ifmap.at(hi, wi, ci);
              }
            }
          }
        }
        out.at(ho, wo, co) = acc;
      }
    }
  }
  return out;
}

int32_t requantize(int64_t acc, int shift) {
  if (shift > 0) acc = (acc + (int64_t{1} << (shift - 1))) >> shift;
  return static_cast<int32_t>(std::clamp<int64_t>(acc, -128, 127));
}

HostTensor reference_layer(const NetGraph& graph, int layer, const std::vector<const HostTensor*>& acts,
                           const ParamData* params) {
  const LayerNode& l = graph.layers[layer];
  const LayerGeometry g = graph.geometry(layer);
  HostTensor out;
  switch (l.op) {
    case OpKind::kConv:
    case OpKind::kFullyConnected:
    case OpKind::kDepthwise:
    case OpKind::kScalar:
      if (!params || acts.size() != 1) fail(ErrorCode::kContract, "reference_layer: bad inputs for " + l.id);
      out = reference_conv(g, *acts[0], *params);
      break;
    case OpKind::kElementwiseAdd: {
      if (!params || acts.size() != 2) fail(ErrorCode::kContract, "reference_layer: bad inputs for " + l.id);
      const HostTensor& a = *acts[0];
      const HostTensor& b = *acts[1];
      out = HostTensor(a.h, a.w, a.c);
      for (int64_t y = 0; y < a.h; ++y)
        for (int64_t x = 0; x < a.w; ++x)
          for (int64_t c = 0; c < a.c; ++c)
            out.at(y, x, c) = a.at(y, x, c) * params->weight(c, 0, 0) +
                              b.at(y, x, c) * params->weight(c, 1, 0) + params->bias[c];
      break;
    }
    case OpKind::kHadamard: {
      if (acts.size() != 2) fail(ErrorCode::kContract, "reference_layer: bad inputs for " + l.id);
      const HostTensor& a = *acts[0];
      const HostTensor& b = *acts[1];
      out = HostTensor(a.h, a.w, a.c);
      for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
      break;
    }
    case OpKind::kFormatSwitch:
      if (acts.size() != 1) fail(ErrorCode::kContract, "reference_layer: bad inputs for " + l.id);
      return *acts[0];
  }
  for (auto& v : out.data) v = requantize(v, l.shift);
  return out;
}

std::map<int, HostTensor> reference_network(const NetGraph& graph, const NetworkData& data) {
  std::map<int, HostTensor> values;
  for (size_t t = 0; t < graph.tensors.size(); ++t) {
    if (graph.tensors[t].kind != TensorKind::kModelInput) continue;
    auto it = data.inputs.find(static_cast<int>(t));
    if (it == data.inputs.end()) fail(ErrorCode::kContract, "missing input data for " + graph.tensors[t].id);
    values[static_cast<int>(t)] = it->second;
  }
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    std::vector<const HostTensor*> acts;
    const ParamData* params = nullptr;
    for (int t : graph.layer_inputs[i]) {
      if (graph.tensors[t].kind == TensorKind::kParameter) {
        params = &data.params.at(t);
      } else {
        acts.push_back(&values.at(t));
      }
    }
    values[graph.layer_output[i]] = reference_layer(graph, static_cast<int>(i), acts, params);
  }
  return values;
}

NetworkData generate_network_data(const NetGraph& graph, uint64_t seed) {
  NetworkData d;
  std::mt19937_64 rng(seed);
  auto draw = [&rng](int lo, int hi) {
    return static_cast<int32_t>(lo + static_cast<int64_t>(rng() % static_cast<uint64_t>(hi - lo + 1)));
  };
  for (size_t t = 0; t < graph.tensors.size(); ++t) {
    const TensorSpec& s = graph.tensors[t];
    if (s.kind == TensorKind::kModelInput) {
      HostTensor v(s.height, s.width, s.channels);
      for (auto& x : v.data) x = draw(-64, 63);
      d.inputs[static_cast<int>(t)] = std::move(v);
    } else if (s.kind == TensorKind::kParameter) {
      ParamData p;
      p.out_c = s.height;
      p.taps = s.width;
      p.in_c = s.channels;
      p.weights.resize(p.out_c * p.taps * p.in_c);
      for (auto& x : p.weights) x = draw(-4, 4);
      p.bias.resize(p.out_c);
      for (auto& x : p.bias) x = draw(-256, 256);
      d.params[static_cast<int>(t)] = std::move(p);
    }
  }
  return d;
}

std::vector<uint8_t> pack_lines(const HostTensor& t, int elem_bytes, int64_t word_bytes, int64_t first_line,
                                int64_t line_count) {
  const int64_t cbytes = padded_channel_bytes(t.c, elem_bytes, word_bytes);
  std::vector<uint8_t> out(line_count * t.w * cbytes, 0);
  for (int64_t y = 0; y < line_count; ++y) {
    for (int64_t x = 0; x < t.w; ++x) {
      uint8_t* px = out.data() + (y * t.w + x) * cbytes;
      for (int64_t c = 0; c < t.c; ++c) {
        const uint32_t v = static_cast<uint32_t>(t.at(first_line + y, x, c));
        for (int b = 0; b < elem_bytes; ++b) px[c * elem_bytes + b] = static_cast<uint8_t>(v >> (8 * b));
      }
    }
  }
  return out;
}

std::vector<uint8_t> pack_params(const ParamData& p, int64_t word_bytes) {
  const int64_t payload = static_cast<int64_t>(p.weights.size()) + 4 * p.out_c;
  std::vector<uint8_t> out(round_up(payload, word_bytes), 0);
  for (size_t i = 0; i < p.weights.size(); ++i) out[i] = static_cast<uint8_t>(p.weights[i]);
  uint8_t* b = out.data() + p.weights.size();
  for (int64_t c = 0; c < p.out_c; ++c) {
    const uint32_t v = static_cast<uint32_t>(p.bias[c]);
    for (int k = 0; k < 4; ++k) b[4 * c + k] = static_cast<uint8_t>(v >> (8 * k));
  }
  return out;
}

}  // namespace npucp
