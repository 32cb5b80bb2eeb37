// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <vector>

#include "npucp/graph.hpp"
#include "npucp/machine.hpp"
#include "npucp/parallelism.hpp"

namespace npucp {

// Tiles of one input tensor that a tile depends on, for each size option of that tensor.
struct InputDeps {
  int tensor = -1;
  std::array<std::vector<int>, 2> tiles;
};

struct Tile {
  int id = 0;
  int tensor = 0;
  int size_option = 0;
  int index = 0;  // position within (tensor, size_option)
  Range lines;
  int64_t bytes = 0;
  int64_t banks = 0;
  int low_bank = 0;  // relative banks when the option's tiles are packed in index order
  int high_bank = 0;
  Format format = Format::kDepth;
  int producer_layer = -1;
  std::vector<InputDeps> inputs;  // empty for parameters and model inputs

  // Dependencies when every input tensor uses the given option (parameters have only one).
  std::vector<int> deps(const std::vector<int>& tensor_option) const;
};

struct Footprint {
  int64_t banks = 0;
  int64_t bytes = 0;
};

Footprint bank_footprint(int64_t bytes, const MachineModel& m);
// Plain lines plus duplicated overlap lines of line-format consumers.
Footprint bank_footprint(const Tile& tile, int64_t expanded_lines, int64_t line_bytes, const MachineModel& m);

struct TileGraph {
  std::vector<Tile> tiles;
  std::vector<std::array<std::vector<int>, 2>> tensor_tiles;  // per tensor and option
  std::vector<std::array<int64_t, 2>> option_lines;           // lines per tile, per tensor and option
  std::vector<Format> tensor_format;
  std::vector<int> default_order;  // option-0 compute tiles, layer by layer
  int reduction_factor = 2;

  // Both options cut the tensor identically.
  bool options_identical(int tensor) const { return option_lines[tensor][0] == option_lines[tensor][1]; }
};

// Input lines read for output lines `out` of a layer.
Range receptive_lines(const LayerGeometry& g, Range out);

// Largest tile height whose double-buffered output, receptive input and parameters fit in TCM.
int64_t max_tile_lines(const NetGraph& graph, int tensor, const MachineModel& m);

// `line_caps` optionally bounds the option-0 height of individual tensors.
TileGraph build_tile_graph(const LoweredGraph& lowered, const MachineModel& m, int reduction_factor = 2,
                           const std::map<int, int64_t>& line_caps = {});

json tile_graph_to_json(const TileGraph& tg, const NetGraph& graph);

struct DupLine {
  int consumer = -1;  // program tile id of the consuming compute tile
  int engine = 0;
  int64_t line = 0;   // tensor line duplicated
  int slot = 0;       // position after the plain lines of the tile
};

struct ProgramTile {
  int id = 0;
  int source = 0;  // tile id in the TileGraph
  int tensor = 0;
  int index = 0;
  Range lines;
  int64_t plain_bytes = 0;
  int64_t slot_bytes = 0;  // plain plus duplicated lines
  int64_t offset = 0;      // byte offset inside the tensor's virtual layout
  int low_bank = 0;        // relative banks touched by the slot
  int high_bank = 0;
  Format format = Format::kDepth;
  int producer_layer = -1;
  bool dram_backed = false;     // parameters and model inputs always have a DRAM copy
  bool model_output = false;
  std::vector<int> deps;
  std::vector<int> ltcm_deps;   // deps that must hold expanded lines when this tile computes
  std::vector<DupLine> dups;
  int64_t compute_cycles = 0;   // engine cycles (compute tiles)
  int64_t copy_cycles = 0;      // datamover cycles of a format-switch tile

  bool computed() const { return producer_layer >= 0; }
  bool is_copy() const { return copy_cycles > 0; }
  int64_t dup_bytes() const { return slot_bytes - plain_bytes; }
};

struct ReuseConfig {
  int consumer = -1;
  std::vector<int> overwritable;
  int banks_saved = 0;
};

struct TileProgram {
  std::vector<ProgramTile> tiles;
  std::vector<int> order;  // compute tiles in execution order
  std::vector<ReuseConfig> reuse;
  std::vector<int> tensor_option;
  std::vector<std::vector<int>> tensor_tiles;  // per tensor, by index

  const ReuseConfig* reuse_for(int consumer) const;
};

// Selects one option per tensor and an execution order (TileGraph ids), lays tiles out and
// computes overlap expansions.
TileProgram finalize_program(const LoweredGraph& lowered, const TileGraph& tg, const std::vector<int>& tensor_option,
                             const std::vector<int>& order, const MachineModel& m);

// Reuse configurations for the program's order: an output tile may take over the banks of an
// input tile whose last reader it is.
std::vector<ReuseConfig> compute_reuse(const TileProgram& p, const LoweredGraph& lowered);

// Layers whose compute tile, dependency spans and parameters cannot fit in TCM together.
struct FitViolation {
  int layer = -1;
  int tensor = -1;  // largest contributor
  int64_t banks = 0;
};
std::vector<FitViolation> fit_violations(const TileProgram& p, const LoweredGraph& lowered, const MachineModel& m);

json tile_program_to_json(const TileProgram& p);
TileProgram tile_program_from_json(const json& j);

}  // namespace npucp
