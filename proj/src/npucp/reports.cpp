// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/reports.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace npucp {

std::string memory_csv(const SimReport& r, const NetGraph& graph) {
  std::set<int> tensors;
  for (const auto& s : r.memory) {
    for (const auto& [t, banks] : s.tensor_banks) tensors.insert(t);
  }
  std::ostringstream os;
  os << "tick";
  for (int t : tensors) os << "," << graph.tensors[t].id;
  os << ",total,capacity\n";
  for (const auto& s : r.memory) {
    os << s.tick;
    for (int t : tensors) {
      auto it = s.tensor_banks.find(t);
      os << "," << (it == s.tensor_banks.end() ? 0 : it->second);
    }
    os << "," << s.total << "," << r.capacity << "\n";
  }
  return os.str();
}

std::string summary_text(const SimReport& r) {
  std::ostringstream os;
  os << "latency_cycles: " << r.latency_cycles << "\n"
     << "latency_with_v2p_cycles: " << r.latency_with_v2p_cycles << "\n"
     << "n_dm: " << r.n_dm << "\n"
     << "dm_traffic_bytes: " << r.dm_traffic_bytes << "\n"
     << "v2p_updates: " << r.v2p_updates << "\n"
     << "peak_banks: " << r.peak_banks << " / " << r.capacity << "\n";
  for (const auto& [name, ok] : r.checks) os << "check " << name << ": " << (ok ? "pass" : "FAIL") << "\n";
  for (const auto& v : r.violations) os << "violation [" << error_code_name(v.code) << "] " << v.message << "\n";
  os << "result: " << (r.passed() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

json report_to_json(const SimReport& r) {
  json ticks = json::array();
  for (const auto& t : r.ticks) {
    ticks.push_back({{"tick", t.schedule_tick}, {"compute", t.compute}, {"jobs", t.jobs}, {"l_c", t.l_c},
                     {"l_dm", t.l_dm}, {"v2p_before", t.v2p_before}, {"v2p_inline", t.v2p_inline}});
  }
  json checks = json::object();
  for (const auto& [name, ok] : r.checks) checks[name] = ok;
  json violations = json::array();
  for (const auto& v : r.violations) {
    violations.push_back({{"code", error_code_name(v.code)}, {"tick", v.tick}, {"tile", v.tile}, {"message", v.message}});
  }
  return {{"latency_cycles", r.latency_cycles},
          {"latency_with_v2p_cycles", r.latency_with_v2p_cycles},
          {"n_dm", r.n_dm},
          {"dm_traffic_bytes", r.dm_traffic_bytes},
          {"v2p_updates", r.v2p_updates},
          {"v2p_cycles", r.v2p_cycles},
          {"peak_banks", r.peak_banks},
          {"capacity", r.capacity},
          {"passed", r.passed()},
          {"checks", checks},
          {"violations", violations},
          {"ticks", ticks}};
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out << text;
  out.close();
  if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void export_reports(const SimReport& r, const TimedSchedule& s, const NetGraph& graph, const ReportPaths& paths) {
  if (!paths.memory_csv.empty()) write_text_file(paths.memory_csv, memory_csv(r, graph));
  if (!paths.gantt_json.empty()) write_text_file(paths.gantt_json, gantt_json(s).dump(2) + "\n");
  if (!paths.summary.empty()) write_text_file(paths.summary, summary_text(r));
}

}  // namespace npucp
