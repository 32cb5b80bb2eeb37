#include <doctest.h>

#include <set>

#include "npucp/generator.hpp"
#include "npucp/pipeline.hpp"
#include "npucp/reports.hpp"
#include "support/alloc_check.hpp"
#include "support/fixtures.hpp"
#include "support/schedule_check.hpp"

using namespace npucp;

namespace {

PipelineOptions quick() {
  PipelineOptions o;
  o.solver_budget_ms = 200;
  return o;
}

MachineModel small_tcm(int banks, int64_t bank_bytes) {
  MachineModel m = default_machine();
  m.tcm_banks = banks;
  m.bank_bytes = bank_bytes;
  return m;
}

bool has_code(const SimReport& r, ErrorCode code) {
  for (const auto& v : r.violations) {
    if (v.code == code) return true;
  }
  return false;
}

// Hand-rolled convolution loop, independent of the library's reference.
int32_t direct_conv(const HostTensor& x, const ParamData& w, int64_t ho, int64_t wo, int64_t co) {
  int64_t acc = w.bias[co];
  for (int64_t fy = 0; fy < 3; ++fy)
    for (int64_t fx = 0; fx < 3; ++fx)
      for (int64_t ci = 0; ci < x.c; ++ci) acc += int64_t{w.weights[(co * 9 + fy * 3 + fx) * x.c + ci]} * x.at(ho + fy, wo + fx, ci);
  return static_cast<int32_t>(std::clamp<int64_t>(acc, -128, 127));
}

PipelineArtifact dram_bound_chain(const PipelineOptions& o) {
  GenOptions g;
  g.seed = 3;
  g.layers = 4;
  g.height = 24;
  g.width = 12;
  g.channels = 16;
  return compile_model(generate_preset("chain", g), small_tcm(12, 1024), o);
}

}  // namespace

TEST_CASE("one-layer conv runs bit-exact through the whole pipeline") {
  const NetGraph g = parse_model(read_text(fixture_path("conv_4x4.json")));
  const PipelineArtifact a = compile_model(g, default_machine(), quick());
  const NetworkData data = generate_network_data(g, 5);
  const RunResult r = run_and_compare(a, data);
  CHECK(r.sim.report.passed());
  CHECK(r.outputs_match);
  const HostTensor& y = r.sim.outputs.at(g.tensor_index("y"));
  const HostTensor& x = data.inputs.at(g.tensor_index("x"));
  const ParamData& w = data.params.at(g.tensor_index("w"));
  REQUIRE(y.h == 2);
  for (int64_t ho = 0; ho < 2; ++ho)
    for (int64_t wo = 0; wo < 2; ++wo)
      for (int64_t co = 0; co < 3; ++co) CHECK(y.at(ho, wo, co) == direct_conv(x, w, ho, wo, co));
  for (const auto& [name, ok] : r.sim.report.checks) CHECK_MESSAGE(ok, name);
}

TEST_CASE("temporally tiled networks match the reference and replay cleanly") {
  for (const std::string preset : {"chain", "residual", "depthwise", "uneven"}) {
    GenOptions go;
    go.seed = 2;
    go.layers = 6;
    go.height = 24;
    go.width = 12;
    go.channels = 12;
    const NetGraph g = generate_preset(preset, go);
    const PipelineArtifact a = compile_model(g, small_tcm(16, 1024), quick());
    INFO(preset);
    CHECK(check_schedule(a.program, a.machine, a.schedule).empty());
    CHECK(check_allocation(a.program, a.machine, a.schedule, a.allocation).empty());
    const RunResult r = run_and_compare(a, generate_network_data(g, 9));
    for (const auto& v : r.sim.report.violations) INFO(v.message);
    CHECK(r.sim.report.passed());
    CHECK(r.outputs_match);
    CHECK(r.sim.report.latency_cycles == a.schedule.objective - a.machine.delta_penalty * a.schedule.n_dm);
    CHECK(r.sim.report.peak_banks <= a.machine.tcm_banks);
  }
}

TEST_CASE("a compute before its fetch is a dependency violation at that tick") {
  const PipelineArtifact good = dram_bound_chain(quick());
  // Drop the fetch feeding the first compute that needs one.
  PipelineArtifact bad = good;
  int tick = -1, tile = -1;
  for (size_t t = 0; t < bad.schedule.ticks.size() && tile < 0; ++t) {
    auto& dm = bad.schedule.ticks[t].dm;
    for (size_t k = 0; k < dm.size(); ++k) {
      if (dm[k].kind != JobKind::kFetch) continue;
      tile = dm[k].tile;
      dm.erase(dm.begin() + static_cast<long>(k));
      break;
    }
  }
  REQUIRE(tile >= 0);
  for (size_t t = 0; t < bad.schedule.ticks.size() && tick < 0; ++t) {
    const int c = bad.schedule.ticks[t].compute;
    if (c < 0) continue;
    const auto& deps = bad.program.tiles[c].deps;
    if (std::find(deps.begin(), deps.end(), tile) != deps.end()) tick = static_cast<int>(t);
  }
  REQUIRE(tick >= 0);
  const RunResult r = run_and_compare(bad, generate_network_data(bad.graph, 1));
  CHECK(r.sim.report.failure_code() == ErrorCode::kValidationDependency);
  bool at_tick = false;
  for (const auto& v : r.sim.report.violations) {
    at_tick = at_tick || (v.code == ErrorCode::kValidationDependency && v.tick == tick);
  }
  CHECK(at_tick);
}

TEST_CASE("injected faults map to their check") {
  const PipelineArtifact good = dram_bound_chain(quick());
  const NetworkData data = generate_network_data(good.graph, 2);
  REQUIRE(run_and_compare(good, data).sim.report.passed());

  SUBCASE("missing output push") {
    PipelineArtifact bad = good;
    for (auto& t : bad.schedule.ticks) {
      std::erase_if(t.dm, [&](const DmJob& j) { return j.kind == JobKind::kPush && bad.program.tiles[j.tile].model_output; });
    }
    CHECK(has_code(run_and_compare(bad, data).sim.report, ErrorCode::kValidationOutput));
  }
  SUBCASE("two tensors on one physical bank") {
    PipelineArtifact bad = good;
    auto& rs = bad.allocation.residencies;
    REQUIRE(rs.size() >= 2);
    for (auto& r : rs) {
      if (bad.program.tiles[r.tile].tensor != bad.program.tiles[rs[0].tile].tensor && r.from_tick <= rs[0].to_tick &&
          rs[0].from_tick <= r.to_tick) {
        r.physical[0] = rs[0].physical[0];
        break;
      }
    }
    const SimReport rep = run_and_compare(bad, data).sim.report;
    CHECK_FALSE(rep.passed());
    CHECK(has_code(rep, ErrorCode::kValidationAllocation));
  }
  SUBCASE("datamover job on a bank the engines use") {
    PipelineArtifact bad = good;
    bool moved = false;
    for (auto& t : bad.schedule.ticks) {
      if (t.compute < 0 || moved) continue;
      const int dep = bad.program.tiles[t.compute].deps.front();
      t.dm.push_back({JobKind::kPush, dep, 1, 0});
      moved = true;
    }
    CHECK(has_code(run_and_compare(bad, data).sim.report, ErrorCode::kValidationBankConflict));
  }
  SUBCASE("computing a tile twice") {
    PipelineArtifact bad = good;
    auto& ticks = bad.schedule.ticks;
    for (size_t t = 0; t + 1 < ticks.size(); ++t) {
      if (ticks[t].compute >= 0 && ticks[t + 1].compute < 0) {
        ticks[t + 1].compute = ticks[t].compute;
        break;
      }
    }
    CHECK(has_code(run_and_compare(bad, data).sim.report, ErrorCode::kValidationPersistency));
  }
}

TEST_CASE("overlapped datamover jobs beat the serialized baseline on the same tiles") {
  PipelineOptions serial = quick();
  serial.serial_schedule = true;
  const PipelineArtifact base = dram_bound_chain(serial);
  const PipelineArtifact fast = dram_bound_chain(quick());
  const NetworkData data = generate_network_data(base.graph, 4);
  const RunResult rb = run_and_compare(base, data);
  const RunResult rf = run_and_compare(fast, data);
  CHECK(rb.sim.report.passed());
  CHECK(rf.sim.report.passed());
  CHECK(rb.outputs_match);
  CHECK(rf.outputs_match);
  CHECK(rf.sim.report.latency_cycles < rb.sim.report.latency_cycles);
}

TEST_CASE("latency is data independent") {
  const PipelineArtifact a = dram_bound_chain(quick());
  const RunResult r1 = run_and_compare(a, generate_network_data(a.graph, 1));
  const RunResult r2 = run_and_compare(a, generate_network_data(a.graph, 2));
  CHECK(r1.sim.report.latency_cycles == r2.sim.report.latency_cycles);
  CHECK(r1.sim.outputs != r2.sim.outputs);
}

TEST_CASE("reports") {
  SUBCASE("empty schedule") {
    NetGraph g;
    TimedSchedule s;
    SimReport r;
    r.capacity = 64;
    CHECK(memory_csv(r, g) == "tick,total,capacity\n");
    CHECK(summary_text(r).find("latency_cycles: 0\n") != std::string::npos);
    CHECK(gantt_json(s).at("jobs").empty());
  }
  SUBCASE("gantt rows and memory columns") {
    const PipelineArtifact a = dram_bound_chain(quick());
    const RunResult r = run_and_compare(a, generate_network_data(a.graph, 1));
    size_t jobs = 0;
    for (const auto& t : a.schedule.ticks) jobs += t.dm.size() + (t.compute >= 0 ? 1 : 0);
    const json gantt = gantt_json(a.schedule);
    CHECK(gantt.at("jobs").size() == jobs);
    CHECK(gantt.at("total_cycles") == r.sim.report.latency_cycles);
    const std::string csv = memory_csv(r.sim.report, a.lowered.graph);
    CHECK(static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n')) == a.schedule.ticks.size() + 1);
    int peak = 0;
    for (const auto& m : r.sim.report.memory) peak = std::max(peak, m.total);
    CHECK(peak == r.sim.report.peak_banks);
  }
}
