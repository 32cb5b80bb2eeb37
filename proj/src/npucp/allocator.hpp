// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "npucp/scheduler.hpp"
#include "npucp/tiling.hpp"

namespace npucp {

// Virtual placement of a tile's lowest bank over a run of ticks.
struct VirtualSegment {
  int from_tick = 0;
  int to_tick = 0;
  int virtual_low = 0;
};

// One stay of a tile in TCM. Physical banks are fixed for the whole stay.
struct Residency {
  int tile = -1;
  int from_tick = 0;
  int to_tick = 0;
  std::vector<int> physical;  // per bank from low_bank to high_bank
  std::vector<VirtualSegment> placement;

  int virtual_low(int tick) const;
};

// Table rewrite applied during `tick`, effective from the next tick. A standalone update runs in
// its own tick inserted right before `tick`.
struct V2pUpdate {
  int tick = 0;
  bool standalone = false;
  std::vector<std::pair<int, int>> entries;  // virtual bank, physical bank
  int64_t cycles = 0;
};

struct AllocationResult {
  std::vector<int> initial_table;  // virtual bank -> physical bank
  std::vector<Residency> residencies;
  std::vector<V2pUpdate> updates;
  int relocations = 0;  // tensor windows moved in virtual space

  // Residency holding `tile` at `tick`, or nullptr.
  const Residency* find(int tile, int tick) const;
};

AllocationResult allocate(const TimedSchedule& s, const TileProgram& p, const MachineModel& m);

// Latency of every schedule tick once V2P jobs are added, standalone ticks included in order.
std::vector<int64_t> tick_latencies_with_v2p(const TimedSchedule& s, const AllocationResult& a);

json allocation_to_json(const AllocationResult& a);
AllocationResult allocation_from_json(const json& j);
std::string v2p_listing(const AllocationResult& a);

}  // namespace npucp
