// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/npucp.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "npucp/generator.hpp"
#include "npucp/pipeline.hpp"
#include "npucp/reports.hpp"

struct npucp_model {
  npucp::NetGraph graph;
};

struct npucp_machine {
  npucp::MachineModel machine;
};

struct npucp_artifact {
  npucp::PipelineArtifact artifact;
  bool has_tiles = false;
};

struct npucp_sim {
  npucp::RunResult run;
  npucp::TimedSchedule schedule;
  npucp::NetGraph graph;  // lowered
};

namespace {

thread_local std::string last_error;

int set_error(int code, const std::string& message) {
  last_error = message;
  return code;
}

// Runs f, translating exceptions into status codes.
template <class F>
int guarded(F&& f) {
  try {
    last_error.clear();
    f();
    return NPUCP_OK;
  } catch (const npucp::Error& e) {
    return set_error(static_cast<int>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(NPUCP_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(NPUCP_ERR_INTERNAL, e.what());
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) npucp::fail(npucp::ErrorCode::kUsage, std::string(what) + " must not be NULL");
}

npucp::NetworkData data_from_json(const npucp::PipelineArtifact& a, const npucp::json& doc) {
  using npucp::ErrorCode;
  const npucp::NetGraph& g = a.graph;
  npucp::NetworkData d = npucp::generate_network_data(g, doc.value("seed", uint64_t{1}));
  try {
    if (doc.contains("inputs")) {
      for (const auto& [id, values] : doc.at("inputs").items()) {
        const int t = g.tensor_index(id);
        if (t < 0 || g.tensors[t].kind != npucp::TensorKind::kModelInput) fail(ErrorCode::kUsage, "data: '" + id + "' is not a model input");
        auto& v = d.inputs.at(t);
        if (values.size() != v.data.size()) fail(ErrorCode::kUsage, "data: '" + id + "' needs " + std::to_string(v.data.size()) + " values");
        v.data = values.get<std::vector<int32_t>>();
      }
    }
    if (doc.contains("params")) {
      for (const auto& [id, p] : doc.at("params").items()) {
        const int t = g.tensor_index(id);
        if (t < 0 || g.tensors[t].kind != npucp::TensorKind::kParameter) fail(ErrorCode::kUsage, "data: '" + id + "' is not a parameter");
        auto& v = d.params.at(t);
        auto w = p.at("weights").get<std::vector<int32_t>>();
        auto b = p.at("bias").get<std::vector<int32_t>>();
        if (w.size() != v.weights.size() || b.size() != v.bias.size()) fail(ErrorCode::kUsage, "data: '" + id + "' has the wrong size");
        v.weights = std::move(w);
        v.bias = std::move(b);
      }
    }
  } catch (const npucp::json::exception& e) {
    fail(ErrorCode::kParse, std::string("data: ") + e.what());
  }
  return d;
}

npucp_sim* run(const npucp::PipelineArtifact& a, const npucp::NetworkData& data) {
  auto* s = new npucp_sim;
  s->run = npucp::run_and_compare(a, data);
  s->schedule = a.schedule;
  s->graph = a.lowered.graph;
  return s;
}

}  // namespace

extern "C" {

const char* npucp_version(void) { return "0.1.0"; }

const char* npucp_status_name(int status) { return npucp::error_code_name(static_cast<npucp::ErrorCode>(status)); }

const char* npucp_last_error(void) { return last_error.c_str(); }

void npucp_string_free(char* s) { std::free(s); }

int npucp_model_parse(const char* json, size_t len, npucp_model** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = new npucp_model{npucp::parse_model(std::string(json, len))};
  });
}

int npucp_model_generate(const char* preset, uint64_t seed, int layers, int64_t height, int64_t width, int64_t channels,
                         npucp_model** out) {
  return guarded([&] {
    require(preset, "preset");
    require(out, "out");
    npucp::GenOptions o;
    o.seed = seed;
    o.layers = layers;
    o.height = height;
    o.width = width;
    o.channels = channels;
    *out = new npucp_model{npucp::generate_preset(preset, o)};
  });
}

int npucp_model_to_json(const npucp_model* model, char** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = copy_string(npucp::serialize_model(model->graph));
  });
}

int npucp_model_layer_count(const npucp_model* model, int* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = static_cast<int>(model->graph.layers.size());
  });
}

void npucp_model_free(npucp_model* model) { delete model; }

int npucp_machine_default(npucp_machine** out) {
  return guarded([&] {
    require(out, "out");
    *out = new npucp_machine{npucp::default_machine()};
  });
}

int npucp_machine_parse(const char* json, size_t len, npucp_machine** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = new npucp_machine{npucp::parse_machine(std::string(json, len))};
  });
}

int npucp_machine_to_json(const npucp_machine* machine, char** out) {
  return guarded([&] {
    require(machine, "machine");
    require(out, "out");
    *out = copy_string(npucp::machine_to_json(machine->machine).dump(2));
  });
}

void npucp_machine_free(npucp_machine* machine) { delete machine; }

void npucp_compile_options_init(npucp_compile_options* options) {
  if (!options) return;
  const npucp::PipelineOptions d;
  options->fusion = d.fusion ? 1 : 0;
  options->delta = d.delta;
  options->reduction_factor = d.reduction_factor;
  options->solver_budget_ms = d.solver_budget_ms;
  options->partition_size = d.partition_size;
  options->serial_schedule = d.serial_schedule ? 1 : 0;
  options->lp_dump_dir = nullptr;
}

int npucp_compile(const npucp_model* model, const npucp_machine* machine, const npucp_compile_options* options,
                  npucp_artifact** out) {
  return guarded([&] {
    require(model, "model");
    require(machine, "machine");
    require(out, "out");
    npucp::PipelineOptions o;
    if (options) {
      if (options->reduction_factor < 2) npucp::fail(npucp::ErrorCode::kUsage, "reduction factor must be at least 2");
      if (options->partition_size < 0) npucp::fail(npucp::ErrorCode::kUsage, "partition size must not be negative");
      if (options->solver_budget_ms <= 0) npucp::fail(npucp::ErrorCode::kUsage, "solver budget must be positive");
      o.fusion = options->fusion != 0;
      o.delta = options->delta;
      o.reduction_factor = options->reduction_factor;
      o.solver_budget_ms = options->solver_budget_ms;
      o.partition_size = options->partition_size;
      o.serial_schedule = options->serial_schedule != 0;
      if (options->lp_dump_dir) o.lp_dump_dir = options->lp_dump_dir;
    }
    auto* a = new npucp_artifact;
    try {
      a->artifact = npucp::compile_model(model->graph, machine->machine, o);
    } catch (...) {
      delete a;
      throw;
    }
    a->has_tiles = true;
    *out = a;
  });
}

int npucp_artifact_parse(const char* json, size_t len, npucp_artifact** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    npucp::json doc;
    try {
      doc = npucp::json::parse(json, json + len);
    } catch (const npucp::json::parse_error& e) {
      npucp::fail(npucp::ErrorCode::kParse, std::string("artifact: malformed JSON (") + e.what() + ")");
    }
    auto* a = new npucp_artifact;
    try {
      a->artifact = npucp::artifact_from_json(doc);
    } catch (...) {
      delete a;
      throw;
    }
    *out = a;
  });
}

int npucp_artifact_to_json(const npucp_artifact* artifact, char** out) {
  return guarded([&] {
    require(artifact, "artifact");
    require(out, "out");
    *out = copy_string(npucp::artifact_to_json(artifact->artifact).dump(1) + "\n");
  });
}

int npucp_artifact_timings_json(const npucp_artifact* artifact, char** out) {
  return guarded([&] {
    require(artifact, "artifact");
    require(out, "out");
    npucp::json j = npucp::timings_to_json(artifact->artifact.timings);
    npucp::json windows = npucp::json::array();
    for (const auto& w : artifact->artifact.schedule.windows) windows.push_back({{"index", w.index}, {"wall_ms", w.wall_ms}});
    npucp::json regions = npucp::json::array();
    for (const auto& r : artifact->artifact.fusion.regions) regions.push_back({{"first_layer", r.region.first_layer}, {"wall_ms", r.wall_ms}});
    j["schedule_windows"] = windows;
    j["fusion_regions"] = regions;
    *out = copy_string(j.dump(2) + "\n");
  });
}

int npucp_artifact_tiles_json(const npucp_artifact* artifact, char** out) {
  return guarded([&] {
    require(artifact, "artifact");
    require(out, "out");
    if (!artifact->has_tiles) npucp::fail(npucp::ErrorCode::kUsage, "tile candidates exist only after compiling");
    *out = copy_string(npucp::tile_graph_to_json(artifact->artifact.tiles, artifact->artifact.lowered.graph).dump(1) + "\n");
  });
}

int npucp_artifact_v2p_listing(const npucp_artifact* artifact, char** out) {
  return guarded([&] {
    require(artifact, "artifact");
    require(out, "out");
    *out = copy_string(npucp::v2p_listing(artifact->artifact.allocation));
  });
}

int npucp_artifact_summary(const npucp_artifact* artifact, npucp_compile_summary* out) {
  return guarded([&] {
    require(artifact, "artifact");
    require(out, "out");
    const auto& a = artifact->artifact;
    out->objective = a.schedule.objective;
    out->latency_cycles = a.schedule.latency_cycles;
    out->n_dm = a.schedule.n_dm;
    out->ticks = static_cast<int64_t>(a.schedule.ticks.size());
    out->tiles = static_cast<int64_t>(a.program.tiles.size());
    out->windows = static_cast<int64_t>(a.schedule.windows.size());
    out->v2p_updates = static_cast<int64_t>(a.allocation.updates.size());
    out->total_wall_ms = 0;
    for (const auto& t : a.timings) out->total_wall_ms += t.wall_ms;
  });
}

void npucp_artifact_free(npucp_artifact* artifact) { delete artifact; }

int npucp_simulate(const npucp_artifact* artifact, uint64_t seed, npucp_sim** out) {
  return guarded([&] {
    require(artifact, "artifact");
    require(out, "out");
    *out = run(artifact->artifact, npucp::generate_network_data(artifact->artifact.graph, seed));
  });
}

int npucp_simulate_with_data(const npucp_artifact* artifact, const char* data_json, size_t len, npucp_sim** out) {
  return guarded([&] {
    require(artifact, "artifact");
    require(data_json, "data_json");
    require(out, "out");
    npucp::json doc;
    try {
      doc = npucp::json::parse(data_json, data_json + len);
    } catch (const npucp::json::parse_error& e) {
      npucp::fail(npucp::ErrorCode::kParse, std::string("data: malformed JSON (") + e.what() + ")");
    }
    *out = run(artifact->artifact, data_from_json(artifact->artifact, doc));
  });
}

int npucp_sim_summary_get(const npucp_sim* sim, npucp_sim_summary* out) {
  return guarded([&] {
    require(sim, "sim");
    require(out, "out");
    const auto& r = sim->run.sim.report;
    out->latency_cycles = r.latency_cycles;
    out->latency_with_v2p_cycles = r.latency_with_v2p_cycles;
    out->n_dm = r.n_dm;
    out->dm_traffic_bytes = r.dm_traffic_bytes;
    out->v2p_updates = r.v2p_updates;
    out->peak_banks = r.peak_banks;
    out->capacity = r.capacity;
    out->checks_passed = r.passed() ? 1 : 0;
    out->outputs_match = sim->run.outputs_match ? 1 : 0;
    int code = static_cast<int>(r.failure_code());
    if (code == NPUCP_OK && !sim->run.outputs_match) code = NPUCP_ERR_VALIDATION_OUTPUT;
    out->failure_code = code;
  });
}

int npucp_sim_report_json(const npucp_sim* sim, char** out) {
  return guarded([&] {
    require(sim, "sim");
    require(out, "out");
    npucp::json j = npucp::report_to_json(sim->run.sim.report);
    j["outputs_match"] = sim->run.outputs_match;
    j["mismatched_outputs"] = sim->run.mismatches;
    *out = copy_string(j.dump(2) + "\n");
  });
}

int npucp_sim_summary_text(const npucp_sim* sim, char** out) {
  return guarded([&] {
    require(sim, "sim");
    require(out, "out");
    std::string text = npucp::summary_text(sim->run.sim.report);
    text += std::string("outputs: ") + (sim->run.outputs_match ? "match the reference" : "DIFFER from the reference") + "\n";
    *out = copy_string(text);
  });
}

int npucp_sim_memory_csv(const npucp_sim* sim, char** out) {
  return guarded([&] {
    require(sim, "sim");
    require(out, "out");
    *out = copy_string(npucp::memory_csv(sim->run.sim.report, sim->graph));
  });
}

int npucp_sim_gantt_json(const npucp_sim* sim, char** out) {
  return guarded([&] {
    require(sim, "sim");
    require(out, "out");
    *out = copy_string(npucp::gantt_json(sim->schedule).dump(2) + "\n");
  });
}

int npucp_sim_outputs_json(const npucp_sim* sim, char** out) {
  return guarded([&] {
    require(sim, "sim");
    require(out, "out");
    npucp::json j = npucp::json::object();
    for (const auto& [t, v] : sim->run.sim.outputs) {
      j[sim->graph.tensors[t].id] = {{"h", v.h}, {"w", v.w}, {"c", v.c}, {"values", v.data}};
    }
    *out = copy_string(j.dump() + "\n");
  });
}

int npucp_sim_write_reports(const npucp_sim* sim, const char* memory_csv_path, const char* gantt_json_path,
                            const char* summary_path) {
  return guarded([&] {
    require(sim, "sim");
    npucp::ReportPaths paths;
    if (memory_csv_path) paths.memory_csv = memory_csv_path;
    if (gantt_json_path) paths.gantt_json = gantt_json_path;
    if (summary_path) paths.summary = summary_path;
    npucp::export_reports(sim->run.sim.report, sim->schedule, sim->graph, paths);
  });
}

void npucp_sim_free(npucp_sim* sim) { delete sim; }

}  // extern "C"
