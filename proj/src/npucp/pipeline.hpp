// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "npucp/allocator.hpp"
#include "npucp/fusion.hpp"
#include "npucp/scheduler.hpp"
#include "npucp/simulator.hpp"

namespace npucp {

inline constexpr int kArtifactVersion = 1;

struct PipelineOptions {
  bool fusion = true;
  int64_t delta = -1;  // overrides the machine's delta_penalty when >= 0
  int reduction_factor = 2;
  int64_t solver_budget_ms = 1000;
  int partition_size = 8;  // 0 schedules the whole program as one window
  bool serial_schedule = false;
  std::string lp_dump_dir;
};

json pipeline_options_to_json(const PipelineOptions& o);

struct StageTiming {
  std::string stage;
  double wall_ms = 0;
};

struct PipelineArtifact {
  NetGraph graph;
  MachineModel machine;  // with the delta override applied
  PipelineOptions options;
  FormatPlan formats;
  LoweredGraph lowered;
  std::map<int, int64_t> line_caps;  // tensor heights lowered to fit the TCM
  TileGraph tiles;                   // not serialized
  FusionResult fusion;
  TileProgram program;
  TimedSchedule schedule;
  AllocationResult allocation;
  std::vector<StageTiming> timings;  // not serialized, see timings_to_json
};

// formats -> tiling -> fusion -> scheduling -> allocation. Tensors whose tiles cannot fit next to
// their consumer's operands get their tile height halved until they do (kInfeasibleLayer at one line).
PipelineArtifact compile_model(const NetGraph& graph, const MachineModel& m, const PipelineOptions& options);

// Deterministic: identical inputs and options give identical bytes.
json artifact_to_json(const PipelineArtifact& a);
// Rebuilds the lowered graph and checks the stored graph hash.
PipelineArtifact artifact_from_json(const json& j);
json timings_to_json(const std::vector<StageTiming>& t);

// Simulates with seeded random inputs and compares every model output with the reference.
struct RunResult {
  SimResult sim;
  bool outputs_match = false;
  std::vector<std::string> mismatches;  // tensor ids
};
RunResult run_and_compare(const PipelineArtifact& a, const NetworkData& data);

}  // namespace npucp
