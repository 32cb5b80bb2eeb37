#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "npucp/cp_solver.hpp"
#include "npucp/generator.hpp"
#include "npucp/parallelism.hpp"
#include "npucp/pipeline.hpp"
#include "npucp/reports.hpp"
#include "support/alloc_check.hpp"
#include "support/cp_random.hpp"
#include "support/exhaustive_schedule.hpp"
#include "support/fixtures.hpp"
#include "support/format_oracle.hpp"
#include "support/programs.hpp"
#include "support/schedule_check.hpp"

using namespace npucp;

namespace {

// Pinned thresholds.
constexpr int kMinNetworks = 20;
constexpr int kInputsPerNetwork = 3;
constexpr double kFunctionalLimitS = 120.0;
constexpr int kCpModels = 100;
constexpr int kCpMaxBools = 20;
constexpr int kScheduleInstances = 100;
constexpr size_t kScheduleMaxTiles = 6;
constexpr double kLatencyHidingRatio = 0.75;
constexpr double kPartitionMinSaving = 0.40;
constexpr double kPartitionMaxSlowdown = 0.10;
constexpr double kPartitionLimitS = 600.0;
constexpr int kPartitionDivisor = 5;
constexpr int64_t kLargeDelta = 1000000;
constexpr int kFormatGraphs = 200;
constexpr int kFormatMaxLayers = 12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

MachineModel small_tcm(int banks, int64_t bank_bytes) {
  MachineModel m = default_machine();
  m.tcm_banks = banks;
  m.bank_bytes = bank_bytes;
  return m;
}

PipelineOptions quick() {
  PipelineOptions o;
  o.solver_budget_ms = 300;
  return o;
}

struct Case {
  std::string name;
  NetGraph graph;
  MachineModel machine;
  PipelineArtifact artifact;
};

std::vector<Case> build_suite() {
  std::vector<Case> suite;
  for (const std::string preset : {"chain", "residual", "depthwise", "uneven"}) {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      GenOptions g;
      g.seed = seed;
      g.layers = 4 + static_cast<int>(seed % 3);
      g.height = 24;
      g.width = 12;
      g.channels = 12;
      suite.push_back({preset + "/" + std::to_string(seed), generate_preset(preset, g), small_tcm(16, 1024), {}});
    }
  }
  for (const std::string f : {"conv_4x4.json", "residual_small.json", "mobilenetv2_prefix.json"}) {
    suite.push_back({f, parse_model(read_text(fixture_path(f))), default_machine(), {}});
  }
  MachineModel tight = default_machine();
  tight.tcm_banks = 32;
  suite.push_back({"mobilenetv2_prefix.json@32", suite.back().graph, tight, {}});
  return suite;
}

// Criterion 1: outputs of the simulated pipeline equal the reference composition bit for bit.
Outcome functional_equivalence(std::vector<Case>& suite) {
  Outcome o;
  const auto start = Clock::now();
  int networks = 0, runs = 0;
  for (auto& c : suite) {
    try {
      c.artifact = compile_model(c.graph, c.machine, quick());
    } catch (const Error& e) {
      o.pass = false;
      o.detail += " " + c.name + ": " + e.what() + ";";
      continue;
    }
    bool ok = true;
    for (int k = 0; k < kInputsPerNetwork; ++k) {
      const RunResult r = run_and_compare(c.artifact, generate_network_data(c.graph, 100 + k));
      ++runs;
      if (!r.outputs_match || !r.sim.report.passed()) {
        ok = false;
        o.detail += " " + c.name + " input " + std::to_string(k) + " differs;";
      }
    }
    networks += ok;
  }
  const double s = seconds_since(start);
  o.pass = o.pass && networks >= kMinNetworks && runs >= kMinNetworks * kInputsPerNetwork && s < kFunctionalLimitS;
  o.detail = fmt("%d networks byte-identical over %d runs in %.1f s (need >= %d x %d, < %.0f s)", networks, runs, s,
                 kMinNetworks, kInputsPerNetwork, kFunctionalLimitS) +
             o.detail;
  return o;
}

// Criterion 2: independent replay of every produced schedule and allocation.
Outcome constraint_soundness(const std::vector<Case>& suite) {
  Outcome o;
  int schedules = 0;
  size_t violations = 0;
  for (const auto& c : suite) {
    if (c.artifact.schedule.ticks.empty()) continue;
    const auto& a = c.artifact;
    auto errors = check_schedule(a.program, a.machine, a.schedule);
    const auto alloc = check_allocation(a.program, a.machine, a.schedule, a.allocation);
    errors.insert(errors.end(), alloc.begin(), alloc.end());
    const SimReport rep = run_and_compare(a, generate_network_data(a.graph, 7)).sim.report;
    for (const auto& v : rep.violations) errors.push_back(v.message);
    violations += errors.size();
    if (!errors.empty()) o.detail += " " + c.name + ": " + errors.front() + ";";
    ++schedules;
  }
  o.pass = violations == 0 && schedules == static_cast<int>(suite.size());
  o.detail = fmt("%d schedules replayed, %zu violations", schedules, violations) + o.detail;
  return o;
}

// Criterion 3: CP optimum vs enumeration, and scheduler optimum vs exhaustive search.
Outcome solver_exactness() {
  Outcome o;
  std::mt19937_64 rng(2026);
  int cp_checked = 0, cp_feasible = 0;
  for (int rep = 0; rep < kCpModels; ++rep) {
    const int bools = 2 + rep % (kCpMaxBools - 1);
    const int ints = bools <= 12 ? static_cast<int>(rng() % 3) : 0;
    const cp::CpModel m = testing_support::random_model(rng, bools, ints, rep % 2 == 0);
    const auto truth = testing_support::brute_force(m);
    const cp::Assignment a = cp::solve(m, cp::SolveOptions{});
    const bool ok = truth.feasible ? (a.status == cp::Status::kOptimal && a.objective == truth.objective &&
                                      testing_support::satisfied(m, a.values))
                                   : a.status == cp::Status::kInfeasible;
    if (!ok) o.detail += fmt(" cp model %d differs;", rep);
    cp_checked += ok;
    cp_feasible += truth.feasible;
  }

  std::mt19937 prng(31);
  int sched_checked = 0, instances = 0;
  ScheduleOptions so;
  so.partition_size = 0;
  so.budget_ms = 20000;
  while (instances < kScheduleInstances) {
    const progs::Builder b = progs::random_small_program(prng);
    const MachineModel m = progs::unit_costs(2 + static_cast<int>(prng() % 4), (prng() % 3 == 0) ? 25 : 0);
    if (b.p.tiles.size() > kScheduleMaxTiles) continue;
    ++instances;
    const oracles::Best e = oracles::exhaustive_schedule(b.p, m);
    bool ok;
    if (e.objective < 0) {
      try {
        schedule_program(b.p, m, so);
        ok = false;
      } catch (const Error&) {
        ok = true;
      }
    } else {
      const TimedSchedule s = schedule_program(b.p, m, so);
      ok = s.objective == e.objective && check_schedule(b.p, m, s).empty();
    }
    if (!ok) o.detail += fmt(" schedule instance %d differs;", instances);
    sched_checked += ok;
  }
  o.pass = cp_checked == kCpModels && sched_checked == kScheduleInstances;
  o.detail = fmt("%d/%d CP models (%d feasible, <= %d booleans) and %d/%d schedules (<= %zu tiles) match exhaustive",
                 cp_checked, kCpModels, cp_feasible, kCpMaxBools, sched_checked, kScheduleInstances,
                 kScheduleMaxTiles) +
             o.detail;
  return o;
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

// Criterion 4: overlapped schedule vs fetch-compute-push serialized on the same tiles.
Outcome latency_hiding() {
  PipelineOptions serial = quick();
  serial.serial_schedule = true;
  const PipelineArtifact base = dram_bound_chain(serial);
  const PipelineArtifact fast = dram_bound_chain(quick());
  const NetworkData data = generate_network_data(base.graph, 1);
  const RunResult rb = run_and_compare(base, data);
  const RunResult rf = run_and_compare(fast, data);
  const double ratio =
      static_cast<double>(rf.sim.report.latency_cycles) / static_cast<double>(rb.sim.report.latency_cycles);
  Outcome o;
  o.pass = rb.sim.report.passed() && rf.sim.report.passed() && rb.outputs_match && rf.outputs_match &&
           ratio <= kLatencyHidingRatio;
  o.detail = fmt("scheduled %lld vs serialized %lld cycles, ratio %.3f (limit %.2f)",
                 static_cast<long long>(rf.sim.report.latency_cycles),
                 static_cast<long long>(rb.sim.report.latency_cycles), ratio, kLatencyHidingRatio);
  return o;
}

// Peak banks of the compute order when everything lives on chip: activation tiles from their
// compute (inputs from the start) to their last reader, parameters only while a reader computes.
int footprint_peak(const PipelineArtifact& a) {
  const auto& p = a.program;
  const auto& g = a.lowered.graph;
  const int n = static_cast<int>(p.tiles.size());
  const int k = static_cast<int>(p.order.size());
  std::vector<int> step(n, -1), last(n, -1);
  for (int i = 0; i < k; ++i) step[p.order[i]] = i;
  for (int i = 0; i < k; ++i)
    for (int d : p.tiles[p.order[i]].deps) last[d] = std::max(last[d], i);
  int peak = 0;
  for (int i = 0; i < k; ++i) {
    std::map<int, std::pair<int, int>> span;
    auto add = [&](const ProgramTile& t) {
      auto [it, fresh] = span.try_emplace(t.tensor, t.low_bank, t.high_bank);
      if (!fresh) it->second = {std::min(it->second.first, t.low_bank), std::max(it->second.second, t.high_bank)};
    };
    const auto& deps = p.tiles[p.order[i]].deps;
    for (int j = 0; j < n; ++j) {
      const ProgramTile& t = p.tiles[j];
      if (g.tensors[t.tensor].kind == TensorKind::kParameter) {
        if (std::find(deps.begin(), deps.end(), j) != deps.end()) add(t);
        continue;
      }
      const int from = t.computed() ? step[j] : 0;
      if (i >= from && i <= std::max(last[j], from)) add(t);
    }
    int total = 0;
    for (const auto& [tensor, s] : span) total += s.second - s.first + 1;
    peak = std::max(peak, total);
  }
  return peak;
}

// Criterion 5: fusion lowers the memory peak and never loses latency on an undersized TCM.
Outcome fusion_benefit() {
  const NetGraph g = parse_model(read_text(fixture_path("mobilenetv2_prefix.json")));
  PipelineOptions fused = quick(), unfused = quick();
  unfused.fusion = false;
  const PipelineArtifact af = compile_model(g, default_machine(), fused);
  const PipelineArtifact au = compile_model(g, default_machine(), unfused);
  const int pf = footprint_peak(af), pu = footprint_peak(au);
  Outcome o;
  o.pass = pf < pu;
  o.detail = fmt("peak %d vs %d banks fused/unfused;", pf, pu);
  const NetworkData data = generate_network_data(g, 5);
  for (int banks : {40, 32, 24}) {
    MachineModel m = default_machine();
    m.tcm_banks = banks;
    const RunResult rf = run_and_compare(compile_model(g, m, fused), data);
    const RunResult ru = run_and_compare(compile_model(g, m, unfused), data);
    const bool ok = rf.sim.report.passed() && ru.sim.report.passed() && rf.outputs_match && ru.outputs_match &&
                    rf.sim.report.latency_cycles <= ru.sim.report.latency_cycles;
    o.pass = o.pass && ok;
    o.detail += fmt(" %d banks: %lld vs %lld cycles;", banks, static_cast<long long>(rf.sim.report.latency_cycles),
                    static_cast<long long>(ru.sim.report.latency_cycles));
  }
  return o;
}

// Criterion 6: windowed scheduling trades a little latency for much shorter compiles.
Outcome partitioning_tradeoff() {
  const auto start = Clock::now();
  GenOptions go;
  go.seed = 1;
  go.layers = 30;
  go.height = 64;
  go.width = 32;
  go.channels = 16;
  const NetGraph g = generate_preset("chain", go);
  const MachineModel m = small_tcm(16, 4096);
  PipelineOptions mono;
  mono.solver_budget_ms = 1000;
  mono.partition_size = 0;

  auto t0 = Clock::now();
  const PipelineArtifact am = compile_model(g, m, mono);
  const double wall_m = seconds_since(t0);
  PipelineOptions win = mono;
  win.partition_size = std::max<int>(1, static_cast<int>(am.program.order.size()) / kPartitionDivisor);
  t0 = Clock::now();
  const PipelineArtifact aw = compile_model(g, m, win);
  const double wall_w = seconds_since(t0);

  const NetworkData data = generate_network_data(g, 1);
  const RunResult rm = run_and_compare(am, data);
  const RunResult rw = run_and_compare(aw, data);
  const double saving = 1.0 - wall_w / wall_m;
  const double slowdown = static_cast<double>(rw.sim.report.latency_cycles) /
                              static_cast<double>(rm.sim.report.latency_cycles) -
                          1.0;
  const double total = seconds_since(start);
  Outcome o;
  o.pass = rm.sim.report.passed() && rw.sim.report.passed() && rm.outputs_match && rw.outputs_match &&
           saving >= kPartitionMinSaving && slowdown <= kPartitionMaxSlowdown && total < kPartitionLimitS;
  o.detail = fmt("%zu computes, window %d: compile %.1f s vs %.1f s (%.1f%% lower, need >= %.0f%%), latency %lld vs "
                 "%lld (%+.1f%%, limit +%.0f%%), %.0f s total",
                 am.program.order.size(), win.partition_size, wall_w, wall_m, 100 * saving, 100 * kPartitionMinSaving,
                 static_cast<long long>(rw.sim.report.latency_cycles),
                 static_cast<long long>(rm.sim.report.latency_cycles), 100 * slowdown, 100 * kPartitionMaxSlowdown,
                 total);
  return o;
}

bool all_optimal(const TimedSchedule& s) {
  return std::all_of(s.windows.begin(), s.windows.end(),
                     [](const WindowStats& w) { return w.status == cp::Status::kOptimal; });
}

// Criterion 7: a larger datamover penalty never adds jobs or removes latency, and the simulated
// latency equals objective - delta * N_DM.
Outcome delta_behaviour() {
  Outcome o;
  int compared = 0, fewer_jobs = 0, identities = 0;
  auto compare = [&](int64_t lat0, int64_t n0, int64_t lat1, int64_t n1, const std::string& what) {
    ++compared;
    fewer_jobs += n1 < n0;
    if (n1 > n0 || lat1 < lat0) {
      o.pass = false;
      o.detail += " " + what + fmt(": N_DM %lld -> %lld, latency %lld -> %lld;", static_cast<long long>(n0),
                                   static_cast<long long>(n1), static_cast<long long>(lat0), static_cast<long long>(lat1));
    }
  };

  std::mt19937 prng(99);
  ScheduleOptions so;
  so.partition_size = 0;
  so.budget_ms = 20000;
  for (int trial = 0, used = 0; used < 100 && trial < 1000; ++trial) {
    const progs::Builder b = progs::random_small_program(prng);
    const int banks = 2 + static_cast<int>(prng() % 4);
    if (b.p.tiles.size() > kScheduleMaxTiles) continue;
    TimedSchedule s0, s1;
    try {
      s0 = schedule_program(b.p, progs::unit_costs(banks, 0), so);
      s1 = schedule_program(b.p, progs::unit_costs(banks, kLargeDelta), so);
    } catch (const Error&) {
      continue;
    }
    ++used;
    if (!all_optimal(s0) || !all_optimal(s1)) continue;
    compare(s0.latency_cycles, s0.n_dm, s1.latency_cycles, s1.n_dm, fmt("program %d", trial));
  }

  for (const std::string preset : {"chain", "residual", "depthwise", "uneven"}) {
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      GenOptions g;
      g.seed = seed;
      g.layers = 3;
      g.height = 16;
      g.width = 8;
      g.channels = 16;
      const NetGraph net = generate_preset(preset, g);
      const NetworkData data = generate_network_data(net, 1);
      int64_t lat[2], n[2];
      bool optimal = true;
      for (int i = 0; i < 2; ++i) {
        PipelineOptions po = quick();
        po.partition_size = 0;
        po.solver_budget_ms = 5000;
        po.delta = i == 0 ? 0 : kLargeDelta;
        const PipelineArtifact a = compile_model(net, small_tcm(10, 1024), po);
        const RunResult r = run_and_compare(a, data);
        lat[i] = r.sim.report.latency_cycles;
        n[i] = r.sim.report.n_dm;
        optimal = optimal && all_optimal(a.schedule);
        const bool identity = r.sim.report.passed() && r.outputs_match &&
                              lat[i] == a.schedule.objective - po.delta * a.schedule.n_dm && n[i] == a.schedule.n_dm;
        identities += identity;
        if (!identity) {
          o.pass = false;
          o.detail += " " + preset + fmt("/%d delta %lld: identity broken;", static_cast<int>(seed),
                                         static_cast<long long>(po.delta));
        }
      }
      if (optimal) compare(lat[0], n[0], lat[1], n[1], preset + "/" + std::to_string(seed));
    }
  }
  o.pass = o.pass && fewer_jobs > 0 && identities == 24;
  o.detail = fmt("%d optimal pairs at delta 0 vs %lld, %d with fewer jobs; %d/24 simulated identities hold", compared,
                 static_cast<long long>(kLargeDelta), fewer_jobs, identities) +
             o.detail;
  return o;
}

// Criterion 8: format DP vs 2^L enumeration; depthwise layers in depth format copy no overlap.
Outcome format_exactness(const std::vector<Case>& suite) {
  Outcome o;
  std::mt19937 rng(8);
  int matched = 0;
  for (int rep = 0; rep < kFormatGraphs; ++rep) {
    const int layers = 1 + static_cast<int>(rng() % kFormatMaxLayers);
    const NetGraph g = random_network(rng(), layers, rep % 3 == 0);
    MachineModel m = default_machine();
    m.n_engines = 1 + static_cast<int>(rng() % 5);
    m.word_bytes = int64_t{1} << (rng() % 5);
    m.tcm_copy_bytes_per_cycle = int64_t{1} << (rng() % 8);
    const FormatPlan plan = select_formats(g, m);
    const bool ok = plan.total_cycles == oracles::brute_force_formats(g, m) &&
                    plan.total_cycles == oracles::assignment_cost(g, m, plan.layer_formats);
    if (!ok) o.detail += fmt(" graph %d differs;", rep);
    matched += ok;
  }

  int depthwise = 0;
  int64_t overlap_bytes = 0;
  for (const auto& c : suite) {
    const auto& a = c.artifact;
    if (a.schedule.ticks.empty()) continue;
    const auto& lg = a.lowered.graph;
    for (size_t l = 0; l < lg.layers.size(); ++l) {
      if (lg.layers[l].op != OpKind::kDepthwise || a.lowered.formats[l] != Format::kDepth) continue;
      ++depthwise;
      const LayerGeometry geo = lg.geometry(static_cast<int>(l));
      for (const auto& s : slice_engines(geo, Format::kDepth, a.machine)) {
        for (const auto& t : slice_engines(geo, Format::kDepth, a.machine)) {
          if (s.engine < t.engine && !intersect(s.ifmap_channels, t.ifmap_channels).empty()) ++overlap_bytes;
        }
      }
      for (const auto& t : a.program.tiles) {
        if (t.producer_layer != static_cast<int>(l)) continue;
        for (int d : t.ltcm_deps) overlap_bytes += a.program.tiles[d].dup_bytes();
      }
    }
  }
  o.pass = matched == kFormatGraphs && depthwise > 0 && overlap_bytes == 0;
  o.detail = fmt("%d/%d graphs (L <= %d) equal brute force; %d depth-format depthwise layers, %lld overlap bytes",
                 matched, kFormatGraphs, kFormatMaxLayers, depthwise, static_cast<long long>(overlap_bytes)) +
             o.detail;
  return o;
}

// Criterion 9: two independent end-to-end runs give identical bytes.
Outcome determinism() {
  Outcome o;
  int identical = 0, runs = 0;
  auto once = [](const NetGraph& g, const MachineModel& m) {
    const PipelineArtifact a = compile_model(g, m, quick());
    const RunResult r = run_and_compare(a, generate_network_data(g, 3));
    return artifact_to_json(a).dump() + memory_csv(r.sim.report, a.lowered.graph) + gantt_json(a.schedule).dump() +
           summary_text(r.sim.report) + report_to_json(r.sim.report).dump();
  };
  GenOptions go;
  go.layers = 6;
  go.height = 24;
  go.width = 12;
  const std::vector<std::pair<NetGraph, MachineModel>> cases = {
      {parse_model(read_text(fixture_path("mobilenetv2_prefix.json"))), small_tcm(32, 16384)},
      {generate_preset("residual", go), small_tcm(16, 1024)},
      {generate_preset("uneven", go), small_tcm(16, 1024)},
  };
  for (const auto& [g, m] : cases) {
    ++runs;
    identical += once(g, m) == once(g, m);
  }
  o.pass = identical == runs;
  o.detail = fmt("%d/%d pipelines byte-identical across two runs (artifact, CSV, Gantt, summary, report)", identical, runs);
  return o;
}

}  // namespace

int main() {
  std::vector<Case> suite = build_suite();
  struct Row {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Row> rows = {
      {"1 functional-equivalence", [&] { return functional_equivalence(suite); }},
      {"2 constraint-soundness", [&] { return constraint_soundness(suite); }},
      {"3 solver-exactness", solver_exactness},
      {"4 latency-hiding", latency_hiding},
      {"5 fusion-benefit", fusion_benefit},
      {"6 partitioning-tradeoff", partitioning_tradeoff},
      {"7 delta-penalty", delta_behaviour},
      {"8 format-exactness", [&] { return format_exactness(suite); }},
      {"9 determinism", determinism},
  };
  int failed = 0;
  for (const auto& row : rows) {
    Outcome o;
    try {
      o = row.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", row.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(rows.size()) - failed, rows.size());
  return failed == 0 ? 0 : 1;
}
