// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npucp/cp_model.hpp"

namespace npucp::cp {

enum class Status { kOptimal, kFeasible, kInfeasible, kTimeout };

const char* to_string(Status s);

struct Assignment {
  Status status = Status::kTimeout;
  std::vector<int64_t> values;
  int64_t objective = 0;
  std::string conflict;  // best-effort hint when infeasible
  int64_t nodes = 0;
  int64_t work = 0;
  double wall_ms = 0;

  bool has_solution() const { return status == Status::kOptimal || status == Status::kFeasible; }
  bool is_true(int var) const { return values[var] != 0; }
};

struct SolveOptions {
  // Work budget expressed in milliseconds of a reference machine. The search stops after
  // budget_ms * work_per_ms propagation steps, which keeps results independent of wall time.
  int64_t budget_ms = 1000;
  int64_t work_per_ms = 40000;
  // Wall-clock safety net, as a multiple of budget_ms. Zero disables it.
  int64_t wall_factor = 20;
  // Optional full or partial assignments (-1 = unspecified) tried first, in order.
  std::vector<std::vector<int64_t>> hints;
  bool linearize = false;
};

Assignment solve(const CpModel& model, const SolveOptions& options = {});

}  // namespace npucp::cp
