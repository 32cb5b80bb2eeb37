// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "npucp/cp_model.hpp"
#include "npucp/cp_solver.hpp"
#include "npucp/tiling.hpp"

namespace npucp {

// Inclusive run of layers in topological order.
struct FusionRegion {
  int first_layer = 0;
  int last_layer = 0;

  bool contains(int layer) const { return layer >= first_layer && layer <= last_layer; }
};

// Per-step banks of an execution order under the single-level memory model: tiles produced before
// the order starts are resident from step 0, every tile stays until its last reader, parameters
// count only while their consumer computes.
std::vector<int64_t> order_memory(const LoweredGraph& lowered, const TileGraph& tg, const std::vector<int>& tensor_option,
                                  const std::vector<int>& order);

std::vector<FusionRegion> find_fusion_regions(const LoweredGraph& lowered, const TileGraph& tg, const MachineModel& m);

struct FusionModel {
  cp::CpModel model;
  FusionRegion region;
  int horizon = 0;
  std::vector<int> region_tensors;
  std::vector<std::array<int, 2>> ls;  // per region tensor and option
  std::vector<int> compute_tiles;      // tile ids of both options
  std::vector<int> resident_tiles;     // produced before the region
  std::vector<std::vector<int>> compute_var;  // [compute tile][t]
  std::vector<std::vector<int>> tcm_var;      // [compute tiles then resident tiles][t]
  std::vector<int> memth;
  std::vector<int64_t> hint;           // layer-by-layer order with the largest tiles
  int64_t hint_objective = 0;
};

// `tensor_option` fixes the option of tensors produced outside the region.
FusionModel build_fusion_model(const LoweredGraph& lowered, const TileGraph& tg, const MachineModel& m,
                               const FusionRegion& region, const std::vector<int>& tensor_option);

struct RegionResult {
  FusionRegion region;
  cp::Status status = cp::Status::kOptimal;
  std::vector<int> order;          // TileGraph ids
  std::vector<int64_t> memth;      // per step, banks
  int64_t objective = 0;           // sum of excess over capacity
  int64_t baseline_objective = 0;  // layer-by-layer with the largest tiles
  int64_t nodes = 0;
  int64_t work = 0;
  double wall_ms = 0;
};

struct FusionOptions {
  bool enabled = true;
  int64_t budget_ms = 1000;
  std::string lp_dump_dir;  // writes one LP file per region when set
};

struct FusionResult {
  std::vector<int> tensor_option;
  std::vector<int> order;  // whole-network compute order, TileGraph ids
  std::vector<RegionResult> regions;
};

RegionResult solve_fusion_region(const LoweredGraph& lowered, const TileGraph& tg, const MachineModel& m,
                                 const FusionRegion& region, const std::vector<int>& tensor_option,
                                 const FusionOptions& options);

// Regions are solved in graph order; everything outside them runs layer by layer with the largest tiles.
FusionResult optimize_fusion(const LoweredGraph& lowered, const TileGraph& tg, const MachineModel& m,
                             const FusionOptions& options);

std::string memth_csv(const RegionResult& r, int capacity_banks);
json fusion_result_to_json(const FusionResult& r);
FusionResult fusion_result_from_json(const json& j);

}  // namespace npucp
