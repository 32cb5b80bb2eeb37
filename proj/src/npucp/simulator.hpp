// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "npucp/allocator.hpp"
#include "npucp/reference.hpp"
#include "npucp/scheduler.hpp"

namespace npucp {

struct Violation {
  ErrorCode code = ErrorCode::kInternal;
  int tick = -1;
  int tile = -1;
  std::string message;
};

struct SimTick {
  int schedule_tick = -1;
  int compute = -1;
  int jobs = 0;
  int64_t l_c = 0;
  int64_t l_dm = 0;           // datamover jobs and switch copies
  int64_t v2p_before = 0;     // table updates that need a tick of their own
  int64_t v2p_inline = 0;     // table updates issued alongside the tick's datamover jobs
  int64_t latency() const { return l_c > l_dm ? l_c : l_dm; }
  int64_t latency_with_v2p() const { return v2p_before + (l_c > l_dm + v2p_inline ? l_c : l_dm + v2p_inline); }
};

struct MemorySample {
  int tick = 0;
  std::map<int, int> tensor_banks;  // tensor index -> physical banks held
  int total = 0;
};

struct SimReport {
  int64_t latency_cycles = 0;           // sum of tick latencies, table updates excluded
  int64_t latency_with_v2p_cycles = 0;  // including the table-update overhead
  int64_t n_dm = 0;
  int64_t dm_traffic_bytes = 0;
  int64_t v2p_updates = 0;
  int64_t v2p_cycles = 0;
  int peak_banks = 0;
  int capacity = 0;
  std::vector<SimTick> ticks;
  std::vector<MemorySample> memory;
  std::vector<std::pair<std::string, bool>> checks;
  std::vector<Violation> violations;

  bool passed() const { return violations.empty(); }
  // Code of the first rule violation; a latency-model mismatch alone reports kInternal.
  ErrorCode failure_code() const {
    for (const auto& v : violations) {
      if (v.code != ErrorCode::kInternal) return v.code;
    }
    return violations.empty() ? ErrorCode::kOk : ErrorCode::kInternal;
  }
};

struct SimResult {
  std::map<int, HostTensor> outputs;  // model-output tensor index -> values read back from DRAM
  SimReport report;
};

// Runs the schedule tick by tick on a byte-level model of DRAM and the banked TCM. Every rule
// violation is recorded with its tick and tile; execution continues so later checks still run.
SimResult simulate(const LoweredGraph& lowered, const TileProgram& p, const TimedSchedule& s, const AllocationResult& a,
                   const MachineModel& m, const NetworkData& data);

}  // namespace npucp
