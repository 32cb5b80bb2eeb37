// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include <npucp/npucp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

using json = nlohmann::json;

namespace {

// Carries a status code out to main().
struct Failure {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, std::string message) { throw Failure{code, std::move(message)}; }

void check(int status, const std::string& what) {
  if (status != NPUCP_OK) fail(status, what + ": " + npucp_last_error());
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Model = std::unique_ptr<npucp_model, Deleter<npucp_model, npucp_model_free>>;
using Machine = std::unique_ptr<npucp_machine, Deleter<npucp_machine, npucp_machine_free>>;
using Artifact = std::unique_ptr<npucp_artifact, Deleter<npucp_artifact, npucp_artifact_free>>;
using Sim = std::unique_ptr<npucp_sim, Deleter<npucp_sim, npucp_sim_free>>;

std::string take(char* s) {
  std::string out = s ? s : "";
  npucp_string_free(s);
  return out;
}

template <typename Fn>
std::string fetch_string(Fn fn, const std::string& what) {
  char* s = nullptr;
  check(fn(&s), what);
  return take(s);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(NPUCP_ERR_IO, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) fail(NPUCP_ERR_IO, "cannot write '" + path + "'");
}

Artifact load_artifact(const std::string& path) {
  const std::string text = read_file(path);
  npucp_artifact* a = nullptr;
  check(npucp_artifact_parse(text.data(), text.size(), &a), path);
  return Artifact(a);
}

// ---- compile

struct CompileArgs {
  std::string model;
  std::string machine;
  std::string config;
  std::string out = "artifact.json";
  std::optional<int> partition_size;
  bool no_fusion = false;
  std::optional<int64_t> delta;
  std::optional<int> reduction_factor;
  std::optional<int64_t> solver_budget_ms;
  bool serial = false;
  bool dump_tiles = false;
  std::string dump_lp;
  bool json_out = false;
};

// Config file keys mirror the long flag names; flags given on the command line win.
void apply_config(const std::string& path, npucp_compile_options& o) {
  json cfg;
  try {
    cfg = json::parse(read_file(path));
    if (!cfg.is_object()) fail(NPUCP_ERR_PARSE, path + ": config must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      if (key == "partition_size") o.partition_size = value.get<int>();
      else if (key == "fusion") o.fusion = value.get<bool>() ? 1 : 0;
      else if (key == "delta") o.delta = value.get<int64_t>();
      else if (key == "reduction_factor") o.reduction_factor = value.get<int>();
      else if (key == "solver_budget_ms") o.solver_budget_ms = value.get<int64_t>();
      else if (key == "serial_schedule") o.serial_schedule = value.get<bool>() ? 1 : 0;
      else fail(NPUCP_ERR_PARSE, path + ": unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(NPUCP_ERR_PARSE, path + ": " + e.what());
  }
}

int run_compile(const CompileArgs& args) {
  const std::string model_text = read_file(args.model);
  npucp_model* mp = nullptr;
  check(npucp_model_parse(model_text.data(), model_text.size(), &mp), args.model);
  Model model(mp);

  npucp_machine* mc = nullptr;
  if (args.machine.empty()) {
    check(npucp_machine_default(&mc), "machine");
  } else {
    const std::string text = read_file(args.machine);
    check(npucp_machine_parse(text.data(), text.size(), &mc), args.machine);
  }
  Machine machine(mc);

  npucp_compile_options o;
  npucp_compile_options_init(&o);
  if (!args.config.empty()) apply_config(args.config, o);
  if (args.partition_size) o.partition_size = *args.partition_size;
  if (args.no_fusion) o.fusion = 0;
  if (args.delta) o.delta = *args.delta;
  if (args.reduction_factor) o.reduction_factor = *args.reduction_factor;
  if (args.solver_budget_ms) o.solver_budget_ms = *args.solver_budget_ms;
  if (args.serial) o.serial_schedule = 1;
  if (!args.dump_lp.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(args.dump_lp, ec);
    if (ec) fail(NPUCP_ERR_IO, "cannot create '" + args.dump_lp + "'");
    o.lp_dump_dir = args.dump_lp.c_str();
  }

  npucp_artifact* ap = nullptr;
  check(npucp_compile(model.get(), machine.get(), &o, &ap), "compile");
  Artifact artifact(ap);

  write_file(args.out, fetch_string([&](char** s) { return npucp_artifact_to_json(artifact.get(), s); }, "artifact"));
  const std::string timings =
      fetch_string([&](char** s) { return npucp_artifact_timings_json(artifact.get(), s); }, "timings");
  write_file(args.out + ".timings.json", timings);
  if (args.dump_tiles) {
    write_file(args.out + ".tiles.json",
               fetch_string([&](char** s) { return npucp_artifact_tiles_json(artifact.get(), s); }, "tiles"));
  }

  npucp_compile_summary sum;
  check(npucp_artifact_summary(artifact.get(), &sum), "summary");
  const json t = json::parse(timings);
  if (args.json_out) {
    json j = {{"artifact", args.out},  {"objective", sum.objective}, {"latency_cycles", sum.latency_cycles},
              {"n_dm", sum.n_dm},      {"ticks", sum.ticks},         {"tiles", sum.tiles},
              {"windows", sum.windows}, {"v2p_updates", sum.v2p_updates}, {"timings", t}};
    std::cout << j.dump(1) << "\n";
    return 0;
  }
  for (const auto& st : t.at("stages")) {
    std::printf("%-12s %10.2f ms\n", st.at("stage").get<std::string>().c_str(), st.at("wall_ms").get<double>());
  }
  std::printf("%-12s %10.2f ms\n", "total", sum.total_wall_ms);
  std::printf("objective: %lld\nlatency_cycles: %lld\nn_dm: %lld\nticks: %lld\ntiles: %lld\nwindows: %lld\n",
              static_cast<long long>(sum.objective), static_cast<long long>(sum.latency_cycles),
              static_cast<long long>(sum.n_dm), static_cast<long long>(sum.ticks), static_cast<long long>(sum.tiles),
              static_cast<long long>(sum.windows));
  std::printf("artifact: %s\n", args.out.c_str());
  return 0;
}

// ---- simulate / compare

Sim simulate(const npucp_artifact* a, uint64_t seed, const std::string& inputs) {
  npucp_sim* sp = nullptr;
  if (inputs.empty()) {
    check(npucp_simulate(a, seed, &sp), "simulate");
  } else {
    const std::string data = read_file(inputs);
    check(npucp_simulate_with_data(a, data.data(), data.size(), &sp), inputs);
  }
  return Sim(sp);
}

json summary_json(const npucp_sim_summary& s) {
  return {{"latency_cycles", s.latency_cycles},
          {"latency_with_v2p_cycles", s.latency_with_v2p_cycles},
          {"n_dm", s.n_dm},
          {"dm_traffic_bytes", s.dm_traffic_bytes},
          {"v2p_updates", s.v2p_updates},
          {"peak_banks", s.peak_banks},
          {"capacity", s.capacity},
          {"checks_passed", s.checks_passed != 0},
          {"outputs_match", s.outputs_match != 0},
          {"failure", npucp_status_name(s.failure_code)},
          {"exit_code", s.failure_code}};
}

struct SimulateArgs {
  std::string artifact;
  uint64_t seed = 1;
  std::string inputs;
  std::string csv, gantt, summary, report, outputs;
  bool json_out = false;
};

int run_simulate(const SimulateArgs& args) {
  Artifact artifact = load_artifact(args.artifact);
  Sim sim = simulate(artifact.get(), args.seed, args.inputs);
  check(npucp_sim_write_reports(sim.get(), args.csv.c_str(), args.gantt.c_str(), args.summary.c_str()), "reports");
  if (!args.report.empty()) {
    write_file(args.report, fetch_string([&](char** s) { return npucp_sim_report_json(sim.get(), s); }, "report"));
  }
  if (!args.outputs.empty()) {
    write_file(args.outputs, fetch_string([&](char** s) { return npucp_sim_outputs_json(sim.get(), s); }, "outputs"));
  }
  npucp_sim_summary sum;
  check(npucp_sim_summary_get(sim.get(), &sum), "summary");
  if (args.json_out) {
    std::cout << summary_json(sum).dump(1) << "\n";
  } else {
    std::cout << fetch_string([&](char** s) { return npucp_sim_summary_text(sim.get(), s); }, "summary");
  }
  return sum.failure_code;
}

struct CompareArgs {
  std::string a, b;
  uint64_t seed = 1;
  std::string inputs;
  bool json_out = false;
};

int run_compare(const CompareArgs& args) {
  Artifact a = load_artifact(args.a);
  Artifact b = load_artifact(args.b);
  Sim sa = simulate(a.get(), args.seed, args.inputs);
  Sim sb = simulate(b.get(), args.seed, args.inputs);
  npucp_sim_summary ra, rb;
  check(npucp_sim_summary_get(sa.get(), &ra), "summary");
  check(npucp_sim_summary_get(sb.get(), &rb), "summary");
  const std::string oa = fetch_string([&](char** s) { return npucp_sim_outputs_json(sa.get(), s); }, "outputs");
  const std::string ob = fetch_string([&](char** s) { return npucp_sim_outputs_json(sb.get(), s); }, "outputs");
  const bool same_outputs = oa == ob;
  const double speedup =
      rb.latency_cycles > 0 ? static_cast<double>(ra.latency_cycles) / static_cast<double>(rb.latency_cycles) : 0.0;

  if (args.json_out) {
    json j = {{"a", summary_json(ra)}, {"b", summary_json(rb)}, {"same_outputs", same_outputs}, {"latency_ratio_a_over_b", speedup}};
    std::cout << j.dump(1) << "\n";
  } else {
    auto row = [](const char* name, long long x, long long y) {
      std::printf("%-24s %14lld %14lld %+14lld\n", name, x, y, y - x);
    };
    std::printf("%-24s %14s %14s %14s\n", "", "A", "B", "B-A");
    row("latency_cycles", ra.latency_cycles, rb.latency_cycles);
    row("latency_with_v2p_cycles", ra.latency_with_v2p_cycles, rb.latency_with_v2p_cycles);
    row("n_dm", ra.n_dm, rb.n_dm);
    row("dm_traffic_bytes", ra.dm_traffic_bytes, rb.dm_traffic_bytes);
    row("v2p_updates", ra.v2p_updates, rb.v2p_updates);
    row("peak_banks", ra.peak_banks, rb.peak_banks);
    std::printf("%-24s %14s %14s\n", "result", npucp_status_name(ra.failure_code), npucp_status_name(rb.failure_code));
    std::printf("same_outputs: %s\n", same_outputs ? "yes" : "no");
  }
  if (ra.failure_code != NPUCP_OK) return ra.failure_code;
  if (rb.failure_code != NPUCP_OK) return rb.failure_code;
  return same_outputs ? 0 : NPUCP_ERR_VALIDATION_OUTPUT;
}

// ---- gen

struct GenArgs {
  std::string preset;
  int layers = 30;
  uint64_t seed = 0;
  int64_t height = 32, width = 32, channels = 16;
  std::string out;
};

int run_gen(const GenArgs& args) {
  npucp_model* mp = nullptr;
  check(npucp_model_generate(args.preset.c_str(), args.seed, args.layers, args.height, args.width, args.channels, &mp),
        "generate");
  Model model(mp);
  const std::string text = fetch_string([&](char** s) { return npucp_model_to_json(model.get(), s); }, "gen");
  if (args.out.empty() || args.out == "-") {
    std::cout << text << "\n";
  } else {
    write_file(args.out, text + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"npucp: NPU mid-end compiler and simulator"};
  app.set_version_flag("--version", std::string(npucp_version()));
  app.require_subcommand(1);

  CompileArgs ca;
  auto* compile = app.add_subcommand("compile", "Compile a model into a pipeline artifact");
  compile->add_option("model", ca.model, "Model JSON")->required()->check(CLI::ExistingFile);
  compile->add_option("-m,--machine", ca.machine, "Machine JSON (defaults to the built-in machine)")
      ->check(CLI::ExistingFile);
  compile->add_option("-c,--config", ca.config, "Compile options JSON; flags override it")->check(CLI::ExistingFile);
  compile->add_option("-o,--output", ca.out, "Artifact path")->capture_default_str();
  compile->add_option("--partition-size", ca.partition_size, "Computes per scheduling window, 0 for one window")
      ->check(CLI::NonNegativeNumber);
  compile->add_flag("--no-fusion", ca.no_fusion, "Disable layer fusion");
  compile->add_option("--delta", ca.delta, "Datamover penalty in cycles per job")->check(CLI::NonNegativeNumber);
  compile->add_option("--reduction-factor", ca.reduction_factor, "Height ratio of the two tile options")
      ->check(CLI::Range(2, 1 << 20));
  compile->add_option("--solver-budget-ms", ca.solver_budget_ms, "Budget per CP solve")->check(CLI::PositiveNumber);
  compile->add_flag("--serial", ca.serial, "Emit the no-overlap baseline schedule");
  compile->add_flag("--dump-tiles", ca.dump_tiles, "Also write <output>.tiles.json");
  compile->add_option("--dump-lp", ca.dump_lp, "Write every CP model as an LP file into this directory");
  compile->add_flag("--json", ca.json_out, "Machine-readable summary");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Replay an artifact on the simulator and validate it");
  sim->add_option("artifact", sa.artifact, "Artifact JSON")->required()->check(CLI::ExistingFile);
  auto* seed_opt = sim->add_option("--seed,--random", sa.seed, "Seed for inputs and parameters")->capture_default_str();
  sim->add_option("--inputs", sa.inputs, "Input data JSON")->check(CLI::ExistingFile)->excludes(seed_opt);
  sim->add_option("--csv", sa.csv, "Memory occupancy CSV path");
  sim->add_option("--gantt", sa.gantt, "Gantt JSON path");
  sim->add_option("--summary", sa.summary, "Text summary path");
  sim->add_option("--report", sa.report, "Full report JSON path");
  sim->add_option("--outputs", sa.outputs, "Output tensors JSON path");
  sim->add_flag("--json", sa.json_out, "Machine-readable summary");

  CompareArgs cm;
  auto* cmp = app.add_subcommand("compare", "Simulate two artifacts on the same data");
  cmp->add_option("a", cm.a, "Artifact A")->required()->check(CLI::ExistingFile);
  cmp->add_option("b", cm.b, "Artifact B")->required()->check(CLI::ExistingFile);
  auto* cseed = cmp->add_option("--seed,--random", cm.seed, "Seed for inputs and parameters")->capture_default_str();
  cmp->add_option("--inputs", cm.inputs, "Input data JSON")->check(CLI::ExistingFile)->excludes(cseed);
  cmp->add_flag("--json", cm.json_out, "Machine-readable comparison");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic network");
  gen->add_option("--preset", ga.preset, "chain, residual, depthwise, uneven, mobilenetv2-prefix or random")
      ->required();
  gen->add_option("--layers", ga.layers, "Layer count")->capture_default_str();
  gen->add_option("--seed", ga.seed, "Generator seed")->capture_default_str();
  gen->add_option("--height", ga.height, "Input height")->capture_default_str();
  gen->add_option("--width", ga.width, "Input width")->capture_default_str();
  gen->add_option("--channels", ga.channels, "Base channel count")->capture_default_str();
  gen->add_option("-o,--output", ga.out, "Output path, stdout when omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : NPUCP_ERR_USAGE;
  }

  try {
    if (*compile) return run_compile(ca);
    if (*sim) return run_simulate(sa);
    if (*cmp) return run_compare(cm);
    if (*gen) return run_gen(ga);
  } catch (const Failure& f) {
    std::cerr << "error (" << npucp_status_name(f.code) << "): " << f.message << "\n";
    return f.code;
  }
  return NPUCP_ERR_USAGE;
}
