// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/parallelism.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace npucp {

const char* to_string(Format f) { return f == Format::kDepth ? "depth" : "line"; }

Format format_from_string(const std::string& s) {
  if (s == "depth") return Format::kDepth;
  if (s == "line") return Format::kLine;
  fail(ErrorCode::kParse, "unknown format '" + s + "'");
}

std::vector<EngineSlice> slice_engines(const LayerGeometry& g, Format f, int n_engines, Range out_lines) {
  std::vector<EngineSlice> slices(n_engines);
  const Range all_in_c{0, g.in_c};
  if (f == Format::kDepth) {
    const int64_t per = ceil_div(g.out_c, n_engines);
    const Range in_lines{out_lines.begin * g.stride,
                         out_lines.empty() ? out_lines.begin * g.stride
                                           : (out_lines.end - 1) * g.stride + g.filter_h};
    for (int n = 0; n < n_engines; ++n) {
      EngineSlice& s = slices[n];
      s.engine = n;
      const Range ch = intersect({n * per, (n + 1) * per}, {0, g.out_c});
      s.param_channels = ch;
      s.ofmap_channels = ch;
      s.ofmap_lines = out_lines;
      s.ifmap_lines = in_lines;
      s.ifmap_channels = g.channel_local() ? ch : all_in_c;
      s.padded = (n + 1) * per > g.out_c;
    }
  } else {
    const int64_t per = ceil_div(out_lines.size(), n_engines);
    for (int n = 0; n < n_engines; ++n) {
      EngineSlice& s = slices[n];
      s.engine = n;
      s.ofmap_lines = intersect({out_lines.begin + n * per, out_lines.begin + (n + 1) * per}, out_lines);
      if (s.ofmap_lines.empty()) {
        s.ofmap_lines = {out_lines.end, out_lines.end};
        s.ifmap_lines = {out_lines.end * g.stride, out_lines.end * g.stride};
      } else {
        s.ifmap_lines = {s.ofmap_lines.begin * g.stride, (s.ofmap_lines.end - 1) * g.stride + g.filter_h};
      }
      s.ofmap_channels = {0, g.out_c};
      s.param_channels = {0, g.out_c};
      s.ifmap_channels = all_in_c;
      s.padded = out_lines.begin + (n + 1) * per > out_lines.end;
    }
  }
  return slices;
}

std::vector<EngineSlice> slice_engines(const LayerGeometry& g, Format f, const MachineModel& m) {
  return slice_engines(g, f, m.n_engines, {0, g.out_h});
}

int64_t overlap_line_count(const LayerGeometry& g, int n_engines, Range out_lines) {
  if (g.filter_h <= g.stride) return 0;
  const auto slices = slice_engines(g, Format::kLine, n_engines, out_lines);
  int64_t count = 0;
  for (int n = 1; n < n_engines; ++n) {
    const Range w = slices[n].ifmap_lines;
    for (int64_t h = w.begin; h < w.end; ++h) {
      for (int k = 0; k < n; ++k) {
        if (slices[k].ifmap_lines.contains(h)) {
          ++count;
          break;
        }
      }
    }
  }
  return count;
}

int64_t overlap_copy_bytes(const LayerGeometry& g, const MachineModel& m) {
  if (g.op == OpKind::kFormatSwitch) return 0;
  const int64_t line = g.in_w * padded_channel_bytes(g.in_c, g.in_elem_bytes, m.word_bytes);
  return overlap_line_count(g, m.n_engines, {0, g.out_h}) * line;
}

int64_t compute_cycles(const LayerGeometry& g, Format f, const MachineModel& m, Range out_lines) {
  if (g.op == OpKind::kFormatSwitch || out_lines.empty()) return 0;
  int64_t work;
  if (f == Format::kDepth) {
    work = out_lines.size() * g.out_w * ceil_div(g.out_c, m.n_engines) * g.macs_per_output;
  } else {
    work = ceil_div(out_lines.size(), m.n_engines) * g.out_w * g.out_c * g.macs_per_output;
  }
  return ceil_div(work, m.macs_per_cycle());
}

int64_t copy_cycles(int64_t bytes, const MachineModel& m) { return ceil_div(bytes, m.tcm_copy_bytes_per_cycle); }

int64_t switch_cycles(const TensorSpec& t, const MachineModel& m) {
  return copy_cycles(tensor_bytes(t, m.word_bytes), m);
}

int64_t estimate_latency(const NetGraph& graph, int layer, Format f, const MachineModel& m) {
  const LayerGeometry g = graph.geometry(layer);
  if (g.op == OpKind::kFormatSwitch) {
    return switch_cycles(graph.tensors[graph.activation_input(layer)], m);
  }
  int64_t cycles = compute_cycles(g, f, m, {0, g.out_h});
  if (f == Format::kLine) cycles += copy_cycles(overlap_copy_bytes(g, m), m);
  return cycles;
}

namespace {

// Open tensor in the format DP: produced, with consumers still to come.
struct OpenTensor {
  int tensor;
  Format format;
  bool switched;
  auto operator<=>(const OpenTensor&) const = default;
};

using DpState = std::vector<OpenTensor>;

struct DpEntry {
  int64_t cost;
  int prev;  // index into previous layer's state list
  Format choice;
};

}  // namespace

FormatPlan select_formats(const NetGraph& graph, const MachineModel& m) {
  const int nl = static_cast<int>(graph.layers.size());
  FormatPlan plan;
  if (nl == 0) return plan;

  std::vector<int> last_use(graph.tensors.size(), -1);
  for (size_t t = 0; t < graph.tensors.size(); ++t) {
    if (!graph.consumers[t].empty()) last_use[t] = graph.consumers[t].back();
  }

  std::vector<std::vector<DpState>> states(nl + 1);
  std::vector<std::vector<DpEntry>> entries(nl + 1);
  states[0].push_back({});
  entries[0].push_back({0, -1, Format::kDepth});

  for (int l = 0; l < nl; ++l) {
    std::map<DpState, int> index;
    const int64_t est[2] = {estimate_latency(graph, l, Format::kDepth, m),
                            estimate_latency(graph, l, Format::kLine, m)};
    for (size_t s = 0; s < states[l].size(); ++s) {
      for (Format f : {Format::kDepth, Format::kLine}) {
        DpState next = states[l][s];
        int64_t cost = entries[l][s].cost + est[f == Format::kLine];
        for (int t : graph.layer_inputs[l]) {
          for (auto& open : next) {
            if (open.tensor == t && open.format != f && !open.switched) {
              cost += switch_cycles(graph.tensors[t], m);
              open.switched = true;
            }
          }
        }
        std::erase_if(next, [&](const OpenTensor& o) { return last_use[o.tensor] <= l; });
        const int out = graph.layer_output[l];
        if (last_use[out] > l) {
          next.push_back({out, f, false});
          std::sort(next.begin(), next.end());
        }
        auto [it, inserted] = index.emplace(next, static_cast<int>(states[l + 1].size()));
        if (inserted) {
          states[l + 1].push_back(next);
          entries[l + 1].push_back({cost, static_cast<int>(s), f});
        } else if (cost < entries[l + 1][it->second].cost) {
          entries[l + 1][it->second] = {cost, static_cast<int>(s), f};
        }
      }
    }
  }

  int best = 0;
  for (size_t s = 1; s < entries[nl].size(); ++s) {
    if (entries[nl][s].cost < entries[nl][best].cost) best = static_cast<int>(s);
  }
  plan.total_cycles = entries[nl][best].cost;
  plan.layer_formats.assign(nl, Format::kDepth);
  for (int l = nl, s = best; l > 0; --l) {
    plan.layer_formats[l - 1] = entries[l][s].choice;
    s = entries[l][s].prev;
  }

  for (int l = 0; l < nl; ++l) {
    const int out = graph.layer_output[l];
    const Format from = plan.layer_formats[l];
    FormatSwitch sw;
    sw.tensor = graph.tensors[out].id;
    sw.from = from;
    sw.to = from == Format::kDepth ? Format::kLine : Format::kDepth;
    sw.cycles = switch_cycles(graph.tensors[out], m);
    for (int c : graph.consumers[out]) {
      if (plan.layer_formats[c] != from) sw.consumers.push_back(graph.layers[c].id);
    }
    if (!sw.consumers.empty()) plan.switches.push_back(std::move(sw));
  }
  return plan;
}

LoweredGraph apply_format_plan(const NetGraph& graph, const FormatPlan& plan) {
  if (plan.layer_formats.size() != graph.layers.size()) {
    fail(ErrorCode::kContract, "format plan does not match graph");
  }
  LoweredGraph out;
  out.graph.tensors = graph.tensors;
  std::map<std::string, const FormatSwitch*> by_tensor;
  for (const auto& sw : plan.switches) by_tensor[sw.tensor] = &sw;

  // Consumer layer id -> (original tensor -> switched tensor).
  std::map<std::string, std::map<std::string, std::string>> rewire;
  for (const auto& sw : plan.switches) {
    const std::string switched = sw.tensor + "@" + to_string(sw.to);
    for (const auto& c : sw.consumers) rewire[c][sw.tensor] = switched;
  }

  for (size_t l = 0; l < graph.layers.size(); ++l) {
    LayerNode node = graph.layers[l];
    auto rw = rewire.find(node.id);
    if (rw != rewire.end()) {
      for (auto& in : node.inputs) {
        auto it = rw->second.find(in);
        if (it != rw->second.end()) in = it->second;
      }
    }
    out.graph.layers.push_back(node);
    out.formats.push_back(plan.layer_formats[l]);
    auto sw = by_tensor.find(node.output);
    if (sw != by_tensor.end()) {
      TensorSpec t = graph.tensors[graph.tensor_index(node.output)];
      t.id = node.output + "@" + to_string(sw->second->to);
      t.kind = TensorKind::kActivation;
      out.graph.tensors.push_back(t);
      LayerNode s;
      s.id = "switch:" + node.output;
      s.op = OpKind::kFormatSwitch;
      s.inputs = {node.output};
      s.output = t.id;
      out.graph.layers.push_back(s);
      out.formats.push_back(sw->second->to);
    }
  }
  out.graph.validate();
  return out;
}

json format_plan_to_json(const FormatPlan& plan) {
  json formats = json::array();
  for (Format f : plan.layer_formats) formats.push_back(to_string(f));
  json switches = json::array();
  for (const auto& s : plan.switches) {
    switches.push_back({{"tensor", s.tensor},
                        {"from", to_string(s.from)},
                        {"to", to_string(s.to)},
                        {"cycles", s.cycles},
                        {"consumers", s.consumers}});
  }
  return {{"layer_formats", formats}, {"switches", switches}, {"total_cycles", plan.total_cycles}};
}

FormatPlan format_plan_from_json(const json& j) {
  FormatPlan plan;
  for (const auto& f : j.at("layer_formats")) plan.layer_formats.push_back(format_from_string(f.get<std::string>()));
  for (const auto& s : j.at("switches")) {
    FormatSwitch sw;
    sw.tensor = s.at("tensor").get<std::string>();
    sw.from = format_from_string(s.at("from").get<std::string>());
    sw.to = format_from_string(s.at("to").get<std::string>());
    sw.cycles = s.at("cycles").get<int64_t>();
    sw.consumers = s.at("consumers").get<std::vector<std::string>>();
    plan.switches.push_back(std::move(sw));
  }
  plan.total_cycles = j.at("total_cycles").get<int64_t>();
  return plan;
}

}  // namespace npucp
