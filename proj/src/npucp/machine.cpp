// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/machine.hpp"

namespace npucp {

void MachineModel::validate() const {
  auto positive = [](int64_t v, const char* name) {
    if (v <= 0) fail(ErrorCode::kParse, std::string("machine.") + name + ": must be > 0");
  };
  positive(n_engines, "n_engines");
  positive(dot_width, "dot_width");
  positive(dot_units, "dot_units");
  positive(clock_hz, "clock_hz");
  positive(tcm_banks, "tcm_banks");
  positive(bank_bytes, "bank_bytes");
  positive(word_bytes, "word_bytes");
  positive(dram_bytes_per_cycle, "dram_bytes_per_cycle");
  positive(tcm_copy_bytes_per_cycle, "tcm_copy_bytes_per_cycle");
  positive(dm_fixed_overhead_cycles, "dm_fixed_overhead_cycles");
  positive(v2p_update_cycles, "v2p_update_cycles");
  if (delta_penalty < 0) fail(ErrorCode::kParse, "machine.delta_penalty: must be >= 0");
  if (tcm_banks < n_engines) fail(ErrorCode::kParse, "machine.tcm_banks: must be >= n_engines");
}

MachineModel default_machine() { return MachineModel{}; }

MachineModel machine_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kParse, "machine: expected an object");
  MachineModel m;
  auto read = [&](const char* key, auto& field) {
    if (!doc.contains(key)) return;
    try {
      field = doc[key].get<std::decay_t<decltype(field)>>();
    } catch (const json::exception&) {
      fail(ErrorCode::kParse, std::string("machine.") + key + ": wrong type");
    }
  };
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    static const char* kKnown[] = {"n_engines", "dot_width", "dot_units", "clock_hz",
                                   "tcm_banks", "bank_bytes", "word_bytes",
                                   "dram_bytes_per_cycle", "tcm_copy_bytes_per_cycle",
                                   "dm_fixed_overhead_cycles", "delta_penalty",
                                   "v2p_update_cycles"};
    bool known = false;
    for (const char* k : kKnown) known = known || it.key() == k;
    if (!known) fail(ErrorCode::kParse, "machine." + it.key() + ": unknown field");
  }
  read("n_engines", m.n_engines);
  read("dot_width", m.dot_width);
  read("dot_units", m.dot_units);
  read("clock_hz", m.clock_hz);
  read("tcm_banks", m.tcm_banks);
  read("bank_bytes", m.bank_bytes);
  read("word_bytes", m.word_bytes);
  read("dram_bytes_per_cycle", m.dram_bytes_per_cycle);
  read("tcm_copy_bytes_per_cycle", m.tcm_copy_bytes_per_cycle);
  read("dm_fixed_overhead_cycles", m.dm_fixed_overhead_cycles);
  read("delta_penalty", m.delta_penalty);
  read("v2p_update_cycles", m.v2p_update_cycles);
  m.validate();
  return m;
}

MachineModel parse_machine(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, std::string("machine: malformed JSON (") + e.what() + ")");
  }
  return machine_from_json(doc);
}

json machine_to_json(const MachineModel& m) {
  return {{"n_engines", m.n_engines},
          {"dot_width", m.dot_width},
          {"dot_units", m.dot_units},
          {"clock_hz", m.clock_hz},
          {"tcm_banks", m.tcm_banks},
          {"bank_bytes", m.bank_bytes},
          {"word_bytes", m.word_bytes},
          {"dram_bytes_per_cycle", m.dram_bytes_per_cycle},
          {"tcm_copy_bytes_per_cycle", m.tcm_copy_bytes_per_cycle},
          {"dm_fixed_overhead_cycles", m.dm_fixed_overhead_cycles},
          {"delta_penalty", m.delta_penalty},
          {"v2p_update_cycles", m.v2p_update_cycles}};
}

}  // namespace npucp
