// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/pipeline.hpp"

#include <chrono>

namespace npucp {

namespace {

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& out) : out_(out) {}

  template <class F>
  auto time(const std::string& stage, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    auto done = [&] {
      out_.push_back({stage, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()});
    };
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      done();
    } else {
      auto r = f();
      done();
      return r;
    }
  }

 private:
  std::vector<StageTiming>& out_;
};

PipelineOptions options_from_json(const json& j) {
  PipelineOptions o;
  o.fusion = j.at("fusion");
  o.delta = j.at("delta");
  o.reduction_factor = j.at("reduction_factor");
  o.solver_budget_ms = j.at("solver_budget_ms");
  o.partition_size = j.at("partition_size");
  o.serial_schedule = j.at("serial_schedule");
  return o;
}

}  // namespace

json pipeline_options_to_json(const PipelineOptions& o) {
  return {{"fusion", o.fusion},
          {"delta", o.delta},
          {"reduction_factor", o.reduction_factor},
          {"solver_budget_ms", o.solver_budget_ms},
          {"partition_size", o.partition_size},
          {"serial_schedule", o.serial_schedule}};
}

PipelineArtifact compile_model(const NetGraph& graph, const MachineModel& machine, const PipelineOptions& options) {
  PipelineArtifact a;
  a.graph = graph;
  a.machine = machine;
  if (options.delta >= 0) a.machine.delta_penalty = options.delta;
  a.machine.validate();
  a.options = options;
  const MachineModel& m = a.machine;
  StageClock clock(a.timings);

  a.formats = clock.time("formats", [&] { return select_formats(graph, m); });
  a.lowered = apply_format_plan(graph, a.formats);

  FusionOptions fo;
  fo.enabled = options.fusion;
  fo.budget_ms = options.solver_budget_ms;
  fo.lp_dump_dir = options.lp_dump_dir;
  for (;;) {
    a.tiles = clock.time("tiling", [&] { return build_tile_graph(a.lowered, m, options.reduction_factor, a.line_caps); });
    a.fusion = clock.time("fusion", [&] { return optimize_fusion(a.lowered, a.tiles, m, fo); });
    a.program = finalize_program(a.lowered, a.tiles, a.fusion.tensor_option, a.fusion.order, m);
    const auto violations = fit_violations(a.program, a.lowered, m);
    if (violations.empty()) break;
    for (const auto& v : violations) {
      const int64_t lines = a.tiles.option_lines[v.tensor][a.fusion.tensor_option[v.tensor]];
      if (lines <= 1) {
        fail(ErrorCode::kInfeasibleLayer, "layer '" + a.lowered.graph.layers[v.layer].id + "': needs " +
                                              std::to_string(v.banks) + " banks with single-line tiles, TCM has " +
                                              std::to_string(m.tcm_banks));
      }
      auto [it, fresh] = a.line_caps.try_emplace(v.tensor, lines / 2);
      if (!fresh) it->second = std::min(it->second, lines / 2);
    }
  }
  a.program.reuse = compute_reuse(a.program, a.lowered);

  ScheduleOptions so;
  so.partition_size = options.partition_size;
  so.budget_ms = options.solver_budget_ms;
  so.serial_only = options.serial_schedule;
  so.lp_dump_dir = options.lp_dump_dir;
  a.schedule = clock.time("scheduling", [&] { return schedule_program(a.program, m, so); });
  a.allocation = clock.time("allocation", [&] { return allocate(a.schedule, a.program, m); });
  return a;
}

json artifact_to_json(const PipelineArtifact& a) {
  json caps = json::array();
  for (const auto& [t, lines] : a.line_caps) caps.push_back({a.graph.tensors[t].id, lines});
  return {{"version", kArtifactVersion},
          {"graph_hash", hex64(graph_hash(a.graph))},
          {"model", model_to_json(a.graph)},
          {"machine", machine_to_json(a.machine)},
          {"options", pipeline_options_to_json(a.options)},
          {"formats", format_plan_to_json(a.formats)},
          {"line_caps", caps},
          {"fusion", fusion_result_to_json(a.fusion)},
          {"program", tile_program_to_json(a.program)},
          {"schedule", schedule_to_json(a.schedule)},
          {"allocation", allocation_to_json(a.allocation)}};
}

PipelineArtifact artifact_from_json(const json& j) {
  PipelineArtifact a;
  try {
    if (j.at("version") != kArtifactVersion) fail(ErrorCode::kParse, "artifact: unsupported version");
    a.graph = parse_model_json(j.at("model"));
    if (hex64(graph_hash(a.graph)) != j.at("graph_hash").get<std::string>()) {
      fail(ErrorCode::kContract, "artifact: graph hash does not match the embedded model");
    }
    a.machine = machine_from_json(j.at("machine"));
    a.options = options_from_json(j.at("options"));
    a.formats = format_plan_from_json(j.at("formats"));
    a.lowered = apply_format_plan(a.graph, a.formats);
    for (const auto& c : j.at("line_caps")) a.line_caps[a.graph.tensor_index(c[0])] = c[1];
    a.fusion = fusion_result_from_json(j.at("fusion"));
    a.program = tile_program_from_json(j.at("program"));
    a.schedule = schedule_from_json(j.at("schedule"));
    a.allocation = allocation_from_json(j.at("allocation"));
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("artifact: ") + e.what());
  }
  const int nt = static_cast<int>(a.lowered.graph.tensors.size());
  if (static_cast<int>(a.program.tensor_tiles.size()) != nt) fail(ErrorCode::kContract, "artifact: program does not match the model");
  for (const auto& t : a.program.tiles) {
    if (t.tensor < 0 || t.tensor >= nt) fail(ErrorCode::kContract, "artifact: tile tensor out of range");
  }
  for (const auto& t : a.schedule.ticks) {
    if (t.compute >= static_cast<int>(a.program.tiles.size())) fail(ErrorCode::kContract, "artifact: schedule names unknown tiles");
    for (const auto& d : t.dm) {
      if (d.tile < 0 || d.tile >= static_cast<int>(a.program.tiles.size())) fail(ErrorCode::kContract, "artifact: schedule names unknown tiles");
    }
  }
  return a;
}

json timings_to_json(const std::vector<StageTiming>& t) {
  json stages = json::array();
  double total = 0;
  for (const auto& s : t) {
    stages.push_back({{"stage", s.stage}, {"wall_ms", s.wall_ms}});
    total += s.wall_ms;
  }
  return {{"stages", stages}, {"total_ms", total}};
}

RunResult run_and_compare(const PipelineArtifact& a, const NetworkData& data) {
  RunResult r;
  r.sim = simulate(a.lowered, a.program, a.schedule, a.allocation, a.machine, data);
  const auto expected = reference_network(a.graph, data);
  r.outputs_match = true;
  for (const auto& [t, values] : r.sim.outputs) {
    // Tensor indices are shared: switch layers only add tensors after the original ones.
    if (expected.at(t) != values) {
      r.outputs_match = false;
      r.mismatches.push_back(a.lowered.graph.tensors[t].id);
    }
  }
  return r;
}

}  // namespace npucp
