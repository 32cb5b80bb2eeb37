// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "npucp/graph.hpp"
#include "npucp/machine.hpp"

namespace npucp {

enum class Format { kDepth, kLine };

const char* to_string(Format f);
Format format_from_string(const std::string& s);

struct EngineSlice {
  int engine = 0;
  Range ifmap_lines;
  Range ifmap_channels;
  Range param_channels;
  Range ofmap_lines;
  Range ofmap_channels;
  // Part of this engine's lockstep work lies beyond the real output.
  bool padded = false;
};

// Engine distribution of the output lines `out_lines` of a layer.
std::vector<EngineSlice> slice_engines(const LayerGeometry& g, Format f, int n_engines, Range out_lines);
std::vector<EngineSlice> slice_engines(const LayerGeometry& g, Format f, const MachineModel& m);

// Input lines of engine windows that also belong to a lower engine's window.
int64_t overlap_line_count(const LayerGeometry& g, int n_engines, Range out_lines);
int64_t overlap_copy_bytes(const LayerGeometry& g, const MachineModel& m);

// Busiest-engine MAC cycles for output lines `out_lines` (lockstep work includes padding).
int64_t compute_cycles(const LayerGeometry& g, Format f, const MachineModel& m, Range out_lines);
int64_t copy_cycles(int64_t bytes, const MachineModel& m);

// Per-layer estimate. Format-switch layers cost a TCM copy of their input.
int64_t estimate_latency(const NetGraph& graph, int layer, Format f, const MachineModel& m);

struct FormatSwitch {
  std::string tensor;
  Format from = Format::kDepth;
  Format to = Format::kLine;
  int64_t cycles = 0;
  std::vector<std::string> consumers;
};

struct FormatPlan {
  std::vector<Format> layer_formats;
  std::vector<FormatSwitch> switches;
  int64_t total_cycles = 0;
};

int64_t switch_cycles(const TensorSpec& t, const MachineModel& m);

FormatPlan select_formats(const NetGraph& graph, const MachineModel& m);

// Graph with switch pseudo-layers inserted, and the format of every layer.
struct LoweredGraph {
  NetGraph graph;
  std::vector<Format> formats;
};

LoweredGraph apply_format_plan(const NetGraph& graph, const FormatPlan& plan);

json format_plan_to_json(const FormatPlan& plan);
FormatPlan format_plan_from_json(const json& j);

}  // namespace npucp
