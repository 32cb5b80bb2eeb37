// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/generator.hpp"

#include <algorithm>
#include <bit>
#include <random>

namespace npucp {

namespace {

int shift_for(int64_t taps) { return (std::bit_width(static_cast<uint64_t>(taps)) + 1) / 2; }

class Builder {
 public:
  NetGraph g;

  int input(const std::string& id, int64_t h, int64_t w, int64_t c, int elem_bytes = 1) {
    g.tensors.push_back({id, h, w, c, elem_bytes, TensorKind::kModelInput});
    return static_cast<int>(g.tensors.size()) - 1;
  }

  // Appends a layer reading `acts` (tensor positions in g.tensors) and returns the output position.
  int layer(OpKind op, const std::vector<int>& acts, int kernel, int stride, int64_t out_c, int elem_bytes = 1) {
    const TensorSpec in = g.tensors[acts[0]];
    const int n = static_cast<int>(g.layers.size());
    const std::string name = "l" + std::to_string(n);
    TensorSpec out{name + "_out", (in.height - kernel) / stride + 1, (in.width - kernel) / stride + 1,
                   is_conv_like(op) ? out_c : in.channels, elem_bytes, TensorKind::kActivation};
    LayerNode node;
    node.id = name;
    node.op = op;
    node.stride = stride;
    node.filter_h = kernel;
    node.filter_w = kernel;
    for (int a : acts) node.inputs.push_back(g.tensors[a].id);
    int64_t taps = 1;
    if (has_params(op)) {
      TensorSpec p{name + "_w", out.channels, int64_t{kernel} * kernel, 1, 1, TensorKind::kParameter};
      if (is_conv_like(op)) p.channels = in.channels;
      if (op == OpKind::kElementwiseAdd) p.width = 2;
      taps = p.width * p.channels;
      g.tensors.push_back(p);
      node.inputs.push_back(p.id);
    }
    node.shift = op == OpKind::kHadamard ? 6 : shift_for(taps);
    node.output = out.id;
    g.tensors.push_back(out);
    g.layers.push_back(node);
    return static_cast<int>(g.tensors.size()) - 1;
  }

  NetGraph finish(int last) {
    g.tensors[last].kind = TensorKind::kModelOutput;
    g.validate();
    return std::move(g);
  }
};

}  // namespace

NetGraph build_chain(const std::vector<LayerShape>& layers, int64_t h, int64_t w, int64_t c) {
  Builder b;
  int cur = b.input("x", h, w, c);
  for (const auto& s : layers) {
    cur = b.layer(s.op, {cur}, s.kernel, s.stride, s.out_c);
  }
  return b.finish(cur);
}

NetGraph random_network(uint64_t seed, int layers, bool branches) {
  std::mt19937_64 rng(seed);
  auto pick = [&rng](int64_t lo, int64_t hi) { return lo + static_cast<int64_t>(rng() % (hi - lo + 1)); };
  Builder b;
  int cur = b.input("x", pick(4, 24), pick(4, 24), pick(1, 24), rng() % 5 == 0 ? 2 : 1);
  std::vector<int> produced{cur};
  for (int l = 0; l < layers; ++l) {
    const TensorSpec& t = b.g.tensors[cur];
    const int eb = rng() % 5 == 0 ? 2 : 1;
    if (branches && l > 0 && rng() % 3 == 0) {
      std::vector<int> same;
      for (int p : produced) {
        const TensorSpec& q = b.g.tensors[p];
        if (p != cur && q.height == t.height && q.width == t.width && q.channels == t.channels) same.push_back(p);
      }
      if (!same.empty()) {
        const int other = same[rng() % same.size()];
        cur = b.layer(rng() % 2 ? OpKind::kElementwiseAdd : OpKind::kHadamard, {cur, other}, 1, 1, 0, eb);
        produced.push_back(cur);
        continue;
      }
    }
    int kernel = rng() % 2 ? 3 : 1;
    int stride = rng() % 4 == 0 ? 2 : 1;
    if (t.height < kernel || t.width < kernel) kernel = 1;
    if (t.height < 2 || t.width < 2) stride = 1;
    const int kind = static_cast<int>(rng() % 6);
    OpKind op = OpKind::kConv;
    if (kind == 1 || kind == 2) op = OpKind::kDepthwise;
    if (kind == 3) op = OpKind::kFullyConnected;
    if (kind == 4 && branches) op = OpKind::kScalar;
    if (op == OpKind::kFullyConnected || op == OpKind::kScalar) kernel = stride = 1;
    // Keep 1x1 layers channel-preserving often so joins find partners.
    const int64_t out_c = kernel == 1 && rng() % 2 ? t.channels : pick(1, 24);
    cur = b.layer(op, {cur}, kernel, stride, out_c, eb);
    produced.push_back(cur);
  }
  return b.finish(cur);
}

std::vector<std::string> preset_names() {
  return {"chain", "residual", "depthwise", "uneven", "mobilenetv2-prefix", "random"};
}

NetGraph generate_preset(const std::string& preset, const GenOptions& o) {
  if (o.layers < 1 || o.height < 1 || o.width < 1 || o.channels < 1) {
    fail(ErrorCode::kUsage, "gen: layers and dimensions must be >= 1");
  }
  std::mt19937_64 rng(o.seed);
  if (preset == "mobilenetv2-prefix") {
    return build_chain({{OpKind::kConv, 3, 2, 32},
                        {OpKind::kDepthwise, 3, 1, 0},
                        {OpKind::kConv, 1, 1, 16},
                        {OpKind::kConv, 1, 1, 96},
                        {OpKind::kDepthwise, 3, 2, 0}},
                       229, 229, 3);
  }
  if (preset == "random") return random_network(o.seed, o.layers, true);

  Builder b;
  int cur = b.input("x", o.height, o.width, o.channels);
  int64_t base_c = o.channels;
  for (int l = 0; l < o.layers;) {
    const TensorSpec t = b.g.tensors[cur];
    const bool room = t.height >= 3 && t.width >= 3;
    const int phase = l % 3;
    if (preset == "chain") {
      // expand 1x1, depthwise 3x3, project 1x1 with a seeded channel jitter.
      const int64_t jitter = static_cast<int64_t>(rng() % 3) * 4;
      if (phase == 0) cur = b.layer(OpKind::kConv, {cur}, 1, 1, 2 * base_c + jitter);
      if (phase == 1) cur = b.layer(OpKind::kDepthwise, {cur}, room ? 3 : 1, 1, 0);
      if (phase == 2) cur = b.layer(OpKind::kConv, {cur}, 1, 1, base_c);
      ++l;
    } else if (preset == "depthwise") {
      if (phase == 0 || phase == 1) cur = b.layer(OpKind::kDepthwise, {cur}, room ? 3 : 1, 1, 0);
      if (phase == 2) cur = b.layer(OpKind::kConv, {cur}, 1, 1, base_c + static_cast<int64_t>(rng() % 2) * 8);
      ++l;
    } else if (preset == "uneven") {
      const int64_t odd[] = {6, 10, 7, 13, 5};
      const int64_t c = odd[(l + rng() % 5) % 5];
      cur = b.layer(phase == 1 ? OpKind::kDepthwise : OpKind::kConv, {cur}, room && phase != 2 ? 3 : 1, 1, c);
      ++l;
    } else if (preset == "residual") {
      const int block_in = cur;
      if (o.layers - l >= 3) {
        int a = b.layer(OpKind::kConv, {cur}, 1, 1, 2 * t.channels);
        int p = b.layer(OpKind::kConv, {a}, 1, 1, t.channels);
        cur = b.layer(rng() % 4 == 0 ? OpKind::kHadamard : OpKind::kElementwiseAdd, {p, block_in}, 1, 1, 0);
        l += 3;
      } else {
        cur = b.layer(OpKind::kDepthwise, {cur}, room ? 3 : 1, 1, 0);
        ++l;
      }
    } else {
      fail(ErrorCode::kUsage, "gen: unknown preset '" + preset + "'");
    }
  }
  return b.finish(cur);
}

}  // namespace npucp
