// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "npucp/cp_model.hpp"
#include "npucp/cp_solver.hpp"
#include "npucp/tiling.hpp"

namespace npucp {

enum class TileState { kNone, kDram, kTcm, kLtcm };
enum class JobKind { kFetch, kPush, kLcopy, kLfetch };

const char* to_string(TileState s);
const char* to_string(JobKind k);
JobKind job_kind_from_string(const std::string& s);

struct DmJob {
  JobKind kind = JobKind::kFetch;
  int tile = -1;
  int banks = 0;
  int64_t cycles = 0;
};

// A tile holding TCM banks during a tick: resident, being written by the engines or arriving by DMA.
struct Occupant {
  int tile = -1;
  int low_bank = 0;
  int high_bank = 0;
};

struct Tick {
  int compute = -1;  // program tile computed this tick
  std::vector<DmJob> dm;
  int64_t l_c = 0;
  int64_t l_dm = 0;  // includes the copy of a format-switch tile
  std::vector<Occupant> occupancy;
  int window = 0;

  int64_t latency() const { return l_c > l_dm ? l_c : l_dm; }
};

struct WindowStats {
  int index = 0;
  int first = 0;  // position in the program order
  int count = 0;
  cp::Status status = cp::Status::kOptimal;
  int64_t objective = 0;
  int64_t hint_objective = 0;    // greedy overlap plan
  int64_t serial_objective = 0;  // no-overlap plan
  int64_t nodes = 0;
  int64_t work = 0;
  int64_t variables = 0;
  double wall_ms = 0;
};

struct TimedSchedule {
  std::vector<Tick> ticks;
  int64_t delta = 0;
  int64_t objective = 0;
  int64_t n_dm = 0;
  int64_t latency_cycles = 0;
  std::vector<WindowStats> windows;
};

// Sum of tick latencies plus delta per datamover job.
int64_t schedule_objective(const TimedSchedule& s);

struct ScheduleOptions {
  int partition_size = 8;
  // Computes of the next window that each window model also plans for; only the window's own
  // ticks are committed.
  int lookahead = 2;
  int64_t budget_ms = 1000;
  int64_t max_variables = 2000000;
  bool serial_only = false;  // skip optimization, emit the no-overlap plan
  std::string lp_dump_dir;
};

// Variables of one window model, indexed [tile][tick]; -1 where a variable does not exist.
struct WindowModel {
  cp::CpModel model;
  int first = 0;
  int count = 0;
  int ticks = 0;  // state ticks; jobs run on ticks 0 .. ticks-2
  bool last = false;
  std::vector<int> tiles;  // program tile ids present in the window
  std::vector<int> first_tick, last_tick, compute_tick;
  std::vector<std::vector<int>> dram, tcm, ltcm, fetch, push, lcopy, lfetch;
  std::vector<int> latency;  // z per job tick
  int one = -1;
};

// `initial` gives the state of every program tile when the window starts.
WindowModel build_window_model(const TileProgram& p, const MachineModel& m, int first, int count, bool last,
                               const std::vector<TileState>& initial);

TimedSchedule schedule_program(const TileProgram& p, const MachineModel& m, const ScheduleOptions& options);

json schedule_to_json(const TimedSchedule& s);
TimedSchedule schedule_from_json(const json& j);
json gantt_json(const TimedSchedule& s);

}  // namespace npucp
