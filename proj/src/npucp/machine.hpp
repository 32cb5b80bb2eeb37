// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "npucp/graph.hpp"

namespace npucp {

struct MachineModel {
  int n_engines = 4;
  int dot_width = 16;
  int dot_units = 16;
  int64_t clock_hz = 1000000000;
  int tcm_banks = 64;
  int64_t bank_bytes = 16384;
  int64_t word_bytes = 16;
  int64_t dram_bytes_per_cycle = 12;
  int64_t tcm_copy_bytes_per_cycle = 64;
  int64_t dm_fixed_overhead_cycles = 32;
  // Penalty per datamover job in the schedule objective, in cycles.
  int64_t delta_penalty = 0;
  // Cost of one V2P table update job.
  int64_t v2p_update_cycles = 8;

  int64_t macs_per_cycle() const { return int64_t{dot_width} * dot_units; }
  int64_t tcm_bytes() const { return tcm_banks * bank_bytes; }
  int64_t banks_for(int64_t bytes) const { return ceil_div(bytes, bank_bytes); }

  void validate() const;
  bool operator==(const MachineModel&) const = default;
};

MachineModel default_machine();
MachineModel parse_machine(const std::string& text);
MachineModel machine_from_json(const json& doc);
json machine_to_json(const MachineModel& m);

}  // namespace npucp
