// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "npucp/simulator.hpp"

namespace npucp {

// tick, one column per tensor that ever holds banks, total, capacity.
std::string memory_csv(const SimReport& r, const NetGraph& graph);

std::string summary_text(const SimReport& r);
json report_to_json(const SimReport& r);

struct ReportPaths {
  std::string memory_csv;
  std::string gantt_json;
  std::string summary;
};

// Empty paths are skipped. Failures raise kIo naming the path.
void export_reports(const SimReport& r, const TimedSchedule& s, const NetGraph& graph, const ReportPaths& paths);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace npucp
