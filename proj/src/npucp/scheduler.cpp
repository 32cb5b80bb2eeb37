// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/scheduler.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace npucp {

const char* to_string(TileState s) {
  switch (s) {
    case TileState::kNone: return "none";
    case TileState::kDram: return "dram";
    case TileState::kTcm: return "tcm";
    case TileState::kLtcm: return "ltcm";
  }
  return "?";
}

const char* to_string(JobKind k) {
  switch (k) {
    case JobKind::kFetch: return "fetch";
    case JobKind::kPush: return "push";
    case JobKind::kLcopy: return "lcopy";
    case JobKind::kLfetch: return "lfetch";
  }
  return "?";
}

JobKind job_kind_from_string(const std::string& s) {
  if (s == "fetch") return JobKind::kFetch;
  if (s == "push") return JobKind::kPush;
  if (s == "lcopy") return JobKind::kLcopy;
  if (s == "lfetch") return JobKind::kLfetch;
  fail(ErrorCode::kParse, "unknown datamover job '" + s + "'");
}

int64_t schedule_objective(const TimedSchedule& s) {
  int64_t total = 0;
  for (const auto& t : s.ticks) total += t.latency() + s.delta * static_cast<int64_t>(t.dm.size());
  return total;
}

namespace {

int64_t job_cycles(JobKind k, const ProgramTile& t, const MachineModel& m) {
  switch (k) {
    case JobKind::kFetch:
    case JobKind::kPush: return ceil_div(t.plain_bytes, m.dram_bytes_per_cycle) + m.dm_fixed_overhead_cycles;
    case JobKind::kLfetch: return ceil_div(t.slot_bytes, m.dram_bytes_per_cycle) + m.dm_fixed_overhead_cycles;
    case JobKind::kLcopy: return ceil_div(t.dup_bytes(), m.tcm_copy_bytes_per_cycle) + m.dm_fixed_overhead_cycles;
  }
  return 0;
}

constexpr JobKind kKinds[] = {JobKind::kFetch, JobKind::kPush, JobKind::kLcopy, JobKind::kLfetch};

std::vector<int>& job_vars(WindowModel& w, JobKind k, int local) {
  switch (k) {
    case JobKind::kFetch: return w.fetch[local];
    case JobKind::kPush: return w.push[local];
    case JobKind::kLcopy: return w.lcopy[local];
    case JobKind::kLfetch: return w.lfetch[local];
  }
  return w.fetch[local];
}

const std::vector<int>& job_vars(const WindowModel& w, JobKind k, int local) {
  return job_vars(const_cast<WindowModel&>(w), k, local);
}

// Positions in the order of every tile's readers.
std::vector<std::vector<int>> reader_positions(const TileProgram& p) {
  std::vector<std::vector<int>> readers(p.tiles.size());
  for (size_t i = 0; i < p.order.size(); ++i) {
    for (int d : p.tiles[p.order[i]].deps) readers[d].push_back(static_cast<int>(i));
  }
  return readers;
}

int var_at(const std::vector<int>& vars, int t) { return t >= 0 && t < static_cast<int>(vars.size()) ? vars[t] : -1; }

bool shares_bank(const ProgramTile& a, const ProgramTile& b) {
  return a.tensor == b.tensor && a.low_bank <= b.high_bank && b.low_bank <= a.high_bank;
}

// Banks written by a computing tile when it takes over part of an input tile's banks.
std::pair<int, int> compute_span(const TileProgram& p, int tile) {
  const ProgramTile& t = p.tiles[tile];
  const ReuseConfig* r = p.reuse_for(tile);
  return {t.low_bank, t.high_bank - (r ? r->banks_saved : 0)};
}

}  // namespace

WindowModel build_window_model(const TileProgram& p, const MachineModel& m, int first, int count, bool last,
                               const std::vector<TileState>& initial) {
  WindowModel w;
  w.first = first;
  w.count = count;
  w.last = last;
  w.ticks = 3 * count + 1 + (last ? 1 : 0);
  const int end = w.ticks - 1;
  const int n = static_cast<int>(p.tiles.size());
  const auto readers = reader_positions(p);
  std::vector<int> pos(n, -1);
  for (size_t i = 0; i < p.order.size(); ++i) pos[p.order[i]] = static_cast<int>(i);
  const int stop = first + count;

  std::vector<int> local(n, -1);
  for (int j = 0; j < n; ++j) {
    const ProgramTile& t = p.tiles[j];
    TileState init = initial[j];
    if (t.dram_backed && init == TileState::kNone) init = TileState::kDram;
    const bool computed_here = pos[j] >= first && pos[j] < stop;
    int last_reader = -1;
    bool later = t.model_output && pos[j] < stop;
    for (int r : readers[j]) {
      if (r >= first && r < stop) last_reader = std::max(last_reader, 3 * (r - first) + 2);
      if (r >= stop) later = true;
    }
    const bool resident = init == TileState::kTcm || init == TileState::kLtcm;
    if (!computed_here && last_reader < 0 && !resident) continue;
    local[j] = static_cast<int>(w.tiles.size());
    w.tiles.push_back(j);
    const int tc = computed_here ? 3 * (pos[j] - first) + 2 : -1;
    w.compute_tick.push_back(tc);
    w.first_tick.push_back(computed_here ? tc + 1 : 0);
    w.last_tick.push_back(later ? end : std::max(last_reader, computed_here ? tc : 0));
  }
  const int nl = static_cast<int>(w.tiles.size());
  cp::CpModel& cm = w.model;
  for (auto* v : {&w.dram, &w.tcm, &w.ltcm, &w.fetch, &w.push, &w.lcopy, &w.lfetch}) {
    v->assign(nl, std::vector<int>(w.ticks, -1));
  }
  w.one = cm.new_bool("one");
  cm.add_linear({{w.one, 1}}, cp::Rel::kEq, 1, "one");

  // Per tick: states, then datamover jobs (tried absent first), then memory and latency.
  std::vector<std::vector<std::pair<int, int>>> hi_lo(w.ticks);
  for (int t = 0; t < w.ticks; ++t) {
    const std::string st = "_" + std::to_string(t);
    for (int l = 0; l < nl; ++l) {
      if (t < w.first_tick[l] || t > w.last_tick[l]) continue;
      const ProgramTile& pt = p.tiles[w.tiles[l]];
      const std::string tag = std::to_string(pt.id) + st;
      w.tcm[l][t] = cm.new_bool("tcm_" + tag);
      if (!pt.dups.empty()) w.ltcm[l][t] = cm.new_bool("ltcm_" + tag);
      w.dram[l][t] = cm.new_bool("dram_" + tag);
    }
    for (int l = 0; l < nl; ++l) {
      if (t < w.first_tick[l] || t >= w.last_tick[l]) continue;
      const ProgramTile& pt = p.tiles[w.tiles[l]];
      const std::string tag = std::to_string(pt.id) + st;
      w.fetch[l][t] = cm.new_bool("fetch_" + tag, true);
      w.push[l][t] = cm.new_bool("push_" + tag, true);
      if (!pt.dups.empty()) {
        w.lcopy[l][t] = cm.new_bool("lcopy_" + tag, true);
        w.lfetch[l][t] = cm.new_bool("lfetch_" + tag, true);
      }
    }
  }

  for (int l = 0; l < nl; ++l) {
    const ProgramTile& pt = p.tiles[w.tiles[l]];
    const std::string tag = std::to_string(pt.id);
    for (int t = w.first_tick[l]; t <= w.last_tick[l]; ++t) {
      std::vector<cp::Term> one_state{{w.tcm[l][t], 1}, {w.dram[l][t], 1}};
      if (w.ltcm[l][t] >= 0) one_state.push_back({w.ltcm[l][t], 1});
      cm.add_linear(one_state, cp::Rel::kLe, 1, "one_state_" + tag);
    }
    const int s0 = w.first_tick[l];
    if (s0 <= w.last_tick[l]) {
      if (w.compute_tick[l] >= 0) {
        cm.add_linear({{w.tcm[l][s0], 1}}, cp::Rel::kEq, 1, "computed_" + tag);
      } else {
        TileState init = initial[pt.id];
        if (pt.dram_backed && init == TileState::kNone) init = TileState::kDram;
        const int v = init == TileState::kTcm ? w.tcm[l][0] : init == TileState::kLtcm ? w.ltcm[l][0] : w.dram[l][0];
        if (init == TileState::kNone || v < 0) fail(ErrorCode::kInternal, "scheduler: tile " + tag + " has no start state");
        cm.add_linear({{v, 1}}, cp::Rel::kEq, 1, "initial_" + tag);
      }
    }
    for (int t = s0; t < w.last_tick[l]; ++t) {
      const int X = w.tcm[l][t], L = w.ltcm[l][t], D = w.dram[l][t];
      const int X1 = w.tcm[l][t + 1], L1 = w.ltcm[l][t + 1], D1 = w.dram[l][t + 1];
      const int F = w.fetch[l][t], P = w.push[l][t], LC = w.lcopy[l][t], LF = w.lfetch[l][t];
      std::vector<cp::Term> single{{F, 1}, {P, 1}};
      cm.add_linear({{F, 1}, {D, -1}}, cp::Rel::kLe, 0, "fetch_src_" + tag);
      cm.add_linear({{F, 1}, {X1, -1}}, cp::Rel::kLe, 0, "fetch_dst_" + tag);
      std::vector<cp::Term> push_src{{P, 1}, {X, -1}};
      if (L >= 0) push_src.push_back({L, -1});
      cm.add_linear(push_src, cp::Rel::kLe, 0, "push_src_" + tag);
      cm.add_linear({{P, 1}, {D1, -1}}, cp::Rel::kLe, 0, "push_dst_" + tag);
      std::vector<cp::Term> keep_x{{X1, 1}, {X, -1}, {F, -1}};
      cm.add_linear(keep_x, cp::Rel::kLe, 0, "persist_tcm_" + tag);
      std::vector<cp::Term> keep_d{{D1, 1}, {D, -1}, {P, -1}};
      if (pt.dram_backed) {
        keep_d.push_back({X, -1});
        if (L >= 0) keep_d.push_back({L, -1});
      }
      cm.add_linear(keep_d, cp::Rel::kLe, 0, "persist_dram_" + tag);
      if (L >= 0) {
        single.push_back({LC, 1});
        single.push_back({LF, 1});
        cm.add_linear({{LC, 1}, {X, -1}}, cp::Rel::kLe, 0, "lcopy_src_" + tag);
        cm.add_linear({{LC, 1}, {L1, -1}}, cp::Rel::kLe, 0, "lcopy_dst_" + tag);
        cm.add_linear({{LF, 1}, {D, -1}}, cp::Rel::kLe, 0, "lfetch_src_" + tag);
        cm.add_linear({{LF, 1}, {L1, -1}}, cp::Rel::kLe, 0, "lfetch_dst_" + tag);
        cm.add_linear({{L1, 1}, {L, -1}, {LC, -1}, {LF, -1}}, cp::Rel::kLe, 0, "persist_ltcm_" + tag);
      }
      cm.add_linear(single, cp::Rel::kLe, 1, "one_job_" + tag);
    }
    // Hand-off and final placement.
    if (w.last_tick[l] == end && w.first_tick[l] <= end) {
      if (last && pt.model_output) {
        cm.add_linear({{w.dram[l][end], 1}}, cp::Rel::kEq, 1, "output_in_dram_" + tag);
      } else if (!pt.dram_backed) {
        std::vector<cp::Term> kept{{w.tcm[l][end], 1}, {w.dram[l][end], 1}};
        if (w.ltcm[l][end] >= 0) kept.push_back({w.ltcm[l][end], 1});
        cm.add_linear(kept, cp::Rel::kGe, 1, "kept_" + tag);
      }
    }
  }

  // Dependencies and bus exclusion at every compute tick.
  for (int l = 0; l < nl; ++l) {
    const int tc = w.compute_tick[l];
    if (tc < 0) continue;
    const ProgramTile& c = p.tiles[w.tiles[l]];
    std::vector<int> busy{c.id};
    for (int d : c.deps) {
      const int ld = local[d];
      if (ld < 0) fail(ErrorCode::kInternal, "scheduler: dependency outside the window model");
      busy.push_back(d);
      const bool expanded = std::find(c.ltcm_deps.begin(), c.ltcm_deps.end(), d) != c.ltcm_deps.end();
      const std::string tag = std::to_string(c.id) + "_" + std::to_string(d);
      if (expanded) {
        cm.add_linear({{w.ltcm[ld][tc], 1}}, cp::Rel::kEq, 1, "dep_ltcm_" + tag);
      } else {
        std::vector<cp::Term> have{{w.tcm[ld][tc], 1}};
        if (w.ltcm[ld][tc] >= 0) have.push_back({w.ltcm[ld][tc], 1});
        cm.add_linear(have, cp::Rel::kGe, 1, "dep_" + tag);
      }
    }
    for (int o = 0; o < nl; ++o) {
      const ProgramTile& other = p.tiles[w.tiles[o]];
      bool blocked = false;
      for (int b : busy) blocked = blocked || b == other.id || shares_bank(other, p.tiles[b]);
      if (!blocked) continue;
      std::vector<cp::Term> jobs;
      for (JobKind k : kKinds) {
        const int v = var_at(job_vars(w, k, o), tc);
        if (v >= 0) jobs.push_back({v, 1});
      }
      if (!jobs.empty()) cm.add_linear(jobs, cp::Rel::kEq, 0, "bus_" + std::to_string(c.id) + "_" + std::to_string(other.id));
    }
  }

  // Memory: per tensor, the range between its lowest and highest occupied bank.
  for (int t = 0; t < w.ticks; ++t) {
    std::map<int, std::pair<std::vector<cp::ExtremumEntry>, std::vector<cp::ExtremumEntry>>> per_tensor;
    int64_t shared = 0;
    for (int l = 0; l < nl; ++l) {
      const ProgramTile& pt = p.tiles[w.tiles[l]];
      auto& [his, los] = per_tensor[pt.tensor];
      if (w.compute_tick[l] == t) {
        // A reusing output overlaps the bottom of its input's range by the saved banks.
        his.push_back({{w.one, false}, pt.high_bank});
        los.push_back({{w.one, false}, pt.low_bank});
        if (const ReuseConfig* r = p.reuse_for(pt.id)) shared = r->banks_saved;
      }
      for (int v : {var_at(w.tcm[l], t), var_at(w.ltcm[l], t), var_at(w.fetch[l], t), var_at(w.lfetch[l], t)}) {
        if (v < 0) continue;
        his.push_back({{v, false}, pt.high_bank});
        los.push_back({{v, false}, pt.low_bank});
      }
    }
    std::vector<cp::Term> row;
    int64_t present = 0;
    for (auto& [tensor, e] : per_tensor) {
      if (e.first.empty()) continue;
      int max_hi = 0;
      for (const auto& x : e.first) max_hi = std::max<int>(max_hi, static_cast<int>(x.value));
      const std::string id = std::to_string(tensor) + "_" + std::to_string(t);
      const int hi = cm.new_int(-1, max_hi, "top_" + id);
      const int lo = cm.new_int(0, max_hi, "bottom_" + id);
      cm.add_extremum(hi, true, std::move(e.first), -1, "top_" + id);
      cm.add_extremum(lo, false, std::move(e.second), 0, "bottom_" + id);
      row.push_back({hi, 1});
      row.push_back({lo, -1});
      ++present;
    }
    if (!row.empty()) cm.add_linear(row, cp::Rel::kLe, m.tcm_banks - present + shared, "memory_" + std::to_string(t));
  }

  // Latency: z_t covers the engine and the serialized datamover jobs of each job tick.
  std::vector<cp::Term> objective;
  w.latency.assign(w.ticks - 1, -1);
  for (int t = 0; t + 1 < w.ticks; ++t) {
    int64_t l_c = 0, copy = 0;
    std::vector<cp::Term> dm;
    int64_t dm_max = 0;
    for (int l = 0; l < nl; ++l) {
      const ProgramTile& pt = p.tiles[w.tiles[l]];
      if (w.compute_tick[l] == t) {
        l_c = pt.compute_cycles;
        copy = pt.copy_cycles;
      }
      for (JobKind k : kKinds) {
        const int v = var_at(job_vars(w, k, l), t);
        if (v < 0) continue;
        const int64_t cost = job_cycles(k, pt, m);
        dm.push_back({v, -cost});
        dm_max += cost;
        objective.push_back({v, m.delta_penalty});
      }
    }
    const int z = cm.new_int(l_c, std::max(l_c, copy + dm_max), "z_" + std::to_string(t));
    w.latency[t] = z;
    dm.push_back({z, 1});
    cm.add_linear(dm, cp::Rel::kGe, copy, "latency_" + std::to_string(t));
    objective.push_back({z, 1});
  }
  cm.minimize(objective);
  return w;
}

namespace {

struct Plan {
  std::vector<std::map<int, JobKind>> jobs;  // per local tile: tick -> job
  std::vector<std::set<int>> drops;          // per local tile: ticks after which the tile leaves TCM for free
};

// States per local tile and tick, or empty when the plan contradicts the state diagram.
std::vector<std::vector<TileState>> replay(const TileProgram& p, const WindowModel& w, const Plan& plan,
                                           const std::vector<TileState>& initial) {
  const int nl = static_cast<int>(w.tiles.size());
  std::vector<std::vector<TileState>> st(nl, std::vector<TileState>(w.ticks, TileState::kNone));
  for (int l = 0; l < nl; ++l) {
    const ProgramTile& pt = p.tiles[w.tiles[l]];
    const int s0 = w.first_tick[l];
    if (s0 > w.last_tick[l]) continue;
    TileState cur = initial[pt.id];
    if (pt.dram_backed && cur == TileState::kNone) cur = TileState::kDram;
    if (w.compute_tick[l] >= 0) cur = TileState::kTcm;
    for (int t = s0; t <= w.last_tick[l]; ++t) {
      st[l][t] = cur;
      auto it = plan.jobs[l].find(t);
      if (it != plan.jobs[l].end()) {
        switch (it->second) {
          case JobKind::kFetch:
            if (cur != TileState::kDram) return {};
            cur = TileState::kTcm;
            break;
          case JobKind::kLfetch:
            if (cur != TileState::kDram) return {};
            cur = TileState::kLtcm;
            break;
          case JobKind::kPush:
            if (cur != TileState::kTcm && cur != TileState::kLtcm) return {};
            cur = TileState::kDram;
            break;
          case JobKind::kLcopy:
            if (cur != TileState::kTcm) return {};
            cur = TileState::kLtcm;
            break;
        }
      } else if (plan.drops[l].count(t)) {
        cur = pt.dram_backed ? TileState::kDram : TileState::kNone;
      }
    }
  }
  return st;
}

std::vector<int64_t> plan_values(const TileProgram& p, const WindowModel& w, const Plan& plan,
                                 const std::vector<TileState>& initial, const MachineModel& m) {
  const auto st = replay(p, w, plan, initial);
  if (st.empty()) return {};
  const cp::CpModel& cm = w.model;
  std::vector<int64_t> v(cm.num_vars(), 0);
  v[w.one] = 1;
  const int nl = static_cast<int>(w.tiles.size());
  for (int l = 0; l < nl; ++l) {
    for (int t = 0; t < w.ticks; ++t) {
      if (w.tcm[l][t] >= 0) v[w.tcm[l][t]] = st[l][t] == TileState::kTcm;
      if (w.ltcm[l][t] >= 0) v[w.ltcm[l][t]] = st[l][t] == TileState::kLtcm;
      if (w.dram[l][t] >= 0) v[w.dram[l][t]] = st[l][t] == TileState::kDram;
    }
    for (const auto& [t, k] : plan.jobs[l]) {
      const int var = var_at(job_vars(w, k, l), t);
      if (var < 0) return {};
      v[var] = 1;
    }
  }
  for (int t = 0; t + 1 < w.ticks; ++t) {
    int64_t l_c = 0, dm = 0;
    for (int l = 0; l < nl; ++l) {
      const ProgramTile& pt = p.tiles[w.tiles[l]];
      if (w.compute_tick[l] == t) {
        l_c = pt.compute_cycles;
        dm += pt.copy_cycles;
      }
      auto it = plan.jobs[l].find(t);
      if (it != plan.jobs[l].end()) dm += job_cycles(it->second, pt, m);
    }
    v[w.latency[t]] = std::max(l_c, dm);
  }
  for (const auto& c : cm.extrema()) v[c.target] = cp::extremum_value(c, v);
  return v;
}

bool plan_feasible(const WindowModel& w, const std::vector<int64_t>& v) {
  return !v.empty() && cp::violations(w.model, v).empty();
}

// Just-in-time loads right before each compute, everything else evicted first. Never overlaps a
// datamover job with a compute.
Plan serial_plan(const TileProgram& p, const WindowModel& w, const std::vector<TileState>& initial) {
  const int nl = static_cast<int>(w.tiles.size());
  Plan plan;
  plan.jobs.resize(nl);
  plan.drops.resize(nl);
  std::map<int, int> local;
  for (int l = 0; l < nl; ++l) local[w.tiles[l]] = l;
  auto state_at = [&](int l, int t) {
    const auto st = replay(p, w, plan, initial);
    return st.empty() ? TileState::kNone : st[l][t];
  };
  for (int i = 0; i < w.count; ++i) {
    const int evict = 3 * i, load = 3 * i + 1;
    const int c = p.order[w.first + i];
    const ProgramTile& ct = p.tiles[c];
    std::set<int> needed(ct.deps.begin(), ct.deps.end());
    for (int l = 0; l < nl; ++l) {
      if (evict < w.first_tick[l] || evict > w.last_tick[l] || needed.count(w.tiles[l])) continue;
      const TileState s = state_at(l, evict);
      if (s != TileState::kTcm && s != TileState::kLtcm) continue;
      if (w.last_tick[l] <= evict) continue;  // leaves on its own
      if (p.tiles[w.tiles[l]].dram_backed) plan.drops[l].insert(evict);
      else plan.jobs[l][evict] = JobKind::kPush;
    }
    for (int d : ct.deps) {
      const int l = local.at(d);
      const bool expanded = std::find(ct.ltcm_deps.begin(), ct.ltcm_deps.end(), d) != ct.ltcm_deps.end();
      const TileState s = state_at(l, load);
      if (s == TileState::kDram) plan.jobs[l][load] = expanded ? JobKind::kLfetch : JobKind::kFetch;
      else if (s == TileState::kTcm && expanded) plan.jobs[l][load] = JobKind::kLcopy;
    }
  }
  if (w.last) {
    const int t = 3 * w.count;
    for (int l = 0; l < nl; ++l) {
      if (!p.tiles[w.tiles[l]].model_output || w.last_tick[l] != w.ticks - 1) continue;
      const TileState s = state_at(l, t);
      if (s == TileState::kTcm || s == TileState::kLtcm) plan.jobs[l][t] = JobKind::kPush;
    }
  }
  return plan;
}

// Local improvements of a feasible plan: keep tiles instead of evicting and re-loading them, load
// earlier so the transfer overlaps a compute, and evict during a compute instead of before it.
Plan improve_plan(const TileProgram& p, const WindowModel& w, Plan plan, const std::vector<TileState>& initial,
                  const MachineModel& m) {
  auto score = [&](const Plan& pl) -> int64_t {
    const auto v = plan_values(p, w, pl, initial, m);
    if (!plan_feasible(w, v)) return -1;
    return cp::evaluate_objective(w.model, v);
  };
  int64_t best = score(plan);
  if (best < 0) return plan;
  const int nl = static_cast<int>(w.tiles.size());
  auto try_plan = [&](const Plan& cand) {
    const int64_t s = score(cand);
    if (s >= 0 && s <= best) {
      plan = cand;
      best = s;
      return true;
    }
    return false;
  };
  for (int l = 0; l < nl; ++l) {
    // Evicted, then loaded again: keep it instead.
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& [t, k] : plan.jobs[l]) {
        if (k != JobKind::kPush && !plan.drops[l].count(t)) continue;
        auto next = plan.jobs[l].upper_bound(t);
        if (next == plan.jobs[l].end() || next->second == JobKind::kPush) continue;
        Plan cand = plan;
        const int reload = next->first;
        const JobKind reload_kind = next->second;
        cand.jobs[l].erase(t);
        cand.jobs[l].erase(reload);
        if (reload_kind == JobKind::kLfetch) cand.jobs[l][reload] = JobKind::kLcopy;
        if (try_plan(cand)) {
          changed = true;
          break;
        }
      }
    }
  }
  for (int l = 0; l < nl; ++l) {
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& [t, k] : plan.jobs[l]) {
        if (k == JobKind::kPush) continue;
        auto prev = plan.jobs[l].lower_bound(t);
        const int floor_tick = prev == plan.jobs[l].begin() ? w.first_tick[l] : std::prev(prev)->first + 1;
        for (int e = t - 1; e >= floor_tick; --e) {
          if (plan.drops[l].count(e)) break;
          Plan cand = plan;
          cand.jobs[l].erase(t);
          cand.jobs[l][e] = k;
          if (try_plan(cand)) {
            changed = true;
            break;
          }
        }
        if (changed) break;
      }
    }
  }
  for (int l = 0; l < nl; ++l) {
    for (const auto& [t, k] : std::map<int, JobKind>(plan.jobs[l])) {
      if (k != JobKind::kPush) continue;
      auto next = plan.jobs[l].upper_bound(t);
      const int limit = std::min(w.last_tick[l] - 1, next == plan.jobs[l].end() ? w.ticks : next->first - 1);
      for (int e = t + 1; e <= limit; ++e) {
        Plan cand = plan;
        cand.jobs[l].erase(t);
        cand.jobs[l][e] = k;
        if (try_plan(cand)) break;
      }
    }
  }
  return plan;
}

struct Decoded {
  std::vector<Tick> ticks;
  std::vector<TileState> end_state;
};

// Keeps ticks before `commit`; the state at `commit` seeds the next window.
Decoded decode(const TileProgram& p, const WindowModel& w, const std::vector<int64_t>& v,
               const std::vector<TileState>& initial, const MachineModel& m, int window_index, int commit) {
  Decoded out;
  const int nl = static_cast<int>(w.tiles.size());
  for (int t = 0; t < commit; ++t) {
    Tick tick;
    tick.window = window_index;
    for (int l = 0; l < nl; ++l) {
      const ProgramTile& pt = p.tiles[w.tiles[l]];
      if (w.compute_tick[l] == t) {
        tick.compute = pt.id;
        tick.l_c = pt.compute_cycles;
        tick.l_dm += pt.copy_cycles;
        const auto [lo, hi] = compute_span(p, pt.id);
        if (hi >= lo) tick.occupancy.push_back({pt.id, lo, hi});
      }
      bool occupied = false;
      for (int var : {var_at(w.tcm[l], t), var_at(w.ltcm[l], t), var_at(w.fetch[l], t), var_at(w.lfetch[l], t)}) {
        occupied = occupied || (var >= 0 && v[var]);
      }
      if (occupied) tick.occupancy.push_back({pt.id, pt.low_bank, pt.high_bank});
      for (JobKind k : kKinds) {
        const int var = var_at(job_vars(w, k, l), t);
        if (var >= 0 && v[var]) {
          tick.dm.push_back({k, pt.id, pt.high_bank - pt.low_bank + 1, job_cycles(k, pt, m)});
          tick.l_dm += tick.dm.back().cycles;
        }
      }
    }
    std::sort(tick.occupancy.begin(), tick.occupancy.end(), [](const Occupant& a, const Occupant& b) { return a.tile < b.tile; });
    out.ticks.push_back(std::move(tick));
  }
  out.end_state = initial;
  for (int l = 0; l < nl; ++l) {
    const int j = w.tiles[l];
    TileState s = TileState::kNone;
    if (w.first_tick[l] <= commit && commit <= w.last_tick[l]) {
      if (v[w.tcm[l][commit]]) s = TileState::kTcm;
      else if (w.ltcm[l][commit] >= 0 && v[w.ltcm[l][commit]]) s = TileState::kLtcm;
      else if (v[w.dram[l][commit]]) s = TileState::kDram;
    }
    if (p.tiles[j].dram_backed && s == TileState::kNone) s = TileState::kDram;
    out.end_state[j] = s;
  }
  return out;
}

}  // namespace

TimedSchedule schedule_program(const TileProgram& p, const MachineModel& m, const ScheduleOptions& options) {
  TimedSchedule out;
  out.delta = m.delta_penalty;
  const int total = static_cast<int>(p.order.size());
  const int size = options.partition_size > 0 ? options.partition_size : std::max(total, 1);
  std::vector<TileState> state(p.tiles.size(), TileState::kNone);
  for (const auto& t : p.tiles) {
    if (t.dram_backed) state[t.id] = TileState::kDram;
  }
  const int lookahead = std::max(options.lookahead, 0);
  int index = 0;
  for (int first = 0, count = 0; first < total || (total == 0 && first == 0); first += count, ++index) {
    count = std::min(size, total - first);
    // A tail shorter than the lookahead joins this window.
    if (first + count + lookahead >= total) count = total - first;
    const bool last = first + count >= total;
    const int planned = last ? count : count + lookahead;
    WindowModel w = build_window_model(p, m, first, planned, last, state);
    const int commit = last ? w.ticks - 1 : 3 * count;
    WindowStats ws;
    ws.index = index;
    ws.first = first;
    ws.count = count;
    ws.variables = w.model.num_vars();
    if (ws.variables > options.max_variables) {
      fail(ErrorCode::kSolver, "window " + std::to_string(index) + " needs " + std::to_string(ws.variables) +
                                   " variables, above the limit of " + std::to_string(options.max_variables) +
                                   "; use a smaller partition size");
    }
    if (!options.lp_dump_dir.empty()) {
      const std::string path = options.lp_dump_dir + "/schedule_w" + std::to_string(index) + ".lp";
      std::ofstream f(path);
      if (!f) fail(ErrorCode::kIo, "cannot write " + path);
      f << w.model.to_lp();
    }
    const Plan serial = serial_plan(p, w, state);
    const auto serial_values = plan_values(p, w, serial, state, m);
    if (!plan_feasible(w, serial_values)) {
      const auto v = cp::violations(w.model, serial_values.empty() ? std::vector<int64_t>(w.model.num_vars(), 0) : serial_values);
      fail(ErrorCode::kSolver, "window " + std::to_string(index) + ": no feasible schedule (" +
                                   (v.empty() ? std::string("replay failed") : v.front()) + ")");
    }
    ws.serial_objective = cp::evaluate_objective(w.model, serial_values);
    std::vector<int64_t> chosen = serial_values;
    ws.status = cp::Status::kFeasible;
    ws.objective = ws.serial_objective;
    ws.hint_objective = ws.serial_objective;
    if (!options.serial_only) {
      const Plan greedy = improve_plan(p, w, serial, state, m);
      const auto greedy_values = plan_values(p, w, greedy, state, m);
      ws.hint_objective = cp::evaluate_objective(w.model, greedy_values);
      cp::SolveOptions so;
      so.budget_ms = options.budget_ms;
      so.hints = {greedy_values, serial_values};
      const cp::Assignment a = cp::solve(w.model, so);
      ws.status = a.status;
      ws.nodes = a.nodes;
      ws.work = a.work;
      ws.wall_ms = a.wall_ms;
      if (a.status == cp::Status::kInfeasible) {
        fail(ErrorCode::kSolver, "window " + std::to_string(index) + " infeasible: " + a.conflict);
      }
      if (a.has_solution()) {
        chosen = a.values;
        ws.objective = a.objective;
      } else {
        chosen = greedy_values;
        ws.objective = ws.hint_objective;
      }
    }
    Decoded d = decode(p, w, chosen, state, m, index, commit);
    state = d.end_state;
    for (auto& t : d.ticks) {
      if (t.compute >= 0 || !t.dm.empty()) out.ticks.push_back(std::move(t));
    }
    out.windows.push_back(ws);
    if (total == 0) break;
  }
  out.n_dm = 0;
  out.latency_cycles = 0;
  for (const auto& t : out.ticks) {
    out.n_dm += static_cast<int64_t>(t.dm.size());
    out.latency_cycles += t.latency();
  }
  out.objective = schedule_objective(out);
  return out;
}

json schedule_to_json(const TimedSchedule& s) {
  json ticks = json::array();
  for (const auto& t : s.ticks) {
    json dm = json::array();
    for (const auto& j : t.dm) dm.push_back({{"kind", to_string(j.kind)}, {"tile", j.tile}, {"banks", j.banks}, {"cycles", j.cycles}});
    json occ = json::array();
    for (const auto& o : t.occupancy) occ.push_back({o.tile, o.low_bank, o.high_bank});
    ticks.push_back({{"compute", t.compute >= 0 ? json{{"tile", t.compute}} : json(nullptr)},
                     {"dm", dm},
                     {"l_c", t.l_c},
                     {"l_dm", t.l_dm},
                     {"window", t.window},
                     {"occupancy", occ}});
  }
  json windows = json::array();
  for (const auto& w : s.windows) {
    windows.push_back({{"index", w.index},
                       {"first", w.first},
                       {"count", w.count},
                       {"status", cp::to_string(w.status)},
                       {"objective", w.objective},
                       {"hint_objective", w.hint_objective},
                       {"serial_objective", w.serial_objective},
                       {"nodes", w.nodes},
                       {"work", w.work},
                       {"variables", w.variables}});
  }
  return {{"ticks", ticks},
          {"objective", s.objective},
          {"n_dm", s.n_dm},
          {"delta", s.delta},
          {"latency_cycles", s.latency_cycles},
          {"windows", windows}};
}

TimedSchedule schedule_from_json(const json& j) {
  try {
    TimedSchedule s;
    for (const auto& t : j.at("ticks")) {
      Tick tick;
      tick.compute = t.at("compute").is_null() ? -1 : t.at("compute").at("tile").get<int>();
      for (const auto& d : t.at("dm")) tick.dm.push_back({job_kind_from_string(d.at("kind")), d.at("tile"), d.at("banks"), d.at("cycles")});
      tick.l_c = t.at("l_c");
      tick.l_dm = t.at("l_dm");
      tick.window = t.at("window");
      for (const auto& o : t.at("occupancy")) tick.occupancy.push_back({o[0], o[1], o[2]});
      s.ticks.push_back(std::move(tick));
    }
    s.objective = j.at("objective");
    s.n_dm = j.at("n_dm");
    s.delta = j.at("delta");
    s.latency_cycles = j.at("latency_cycles");
    for (const auto& w : j.at("windows")) {
      WindowStats ws;
      ws.index = w.at("index");
      ws.first = w.at("first");
      ws.count = w.at("count");
      const std::string st = w.at("status");
      ws.status = st == "optimal" ? cp::Status::kOptimal : st == "feasible" ? cp::Status::kFeasible
                  : st == "infeasible" ? cp::Status::kInfeasible : cp::Status::kTimeout;
      ws.objective = w.at("objective");
      ws.hint_objective = w.at("hint_objective");
      ws.serial_objective = w.at("serial_objective");
      ws.nodes = w.at("nodes");
      ws.work = w.at("work");
      ws.variables = w.at("variables");
      s.windows.push_back(ws);
    }
    return s;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("schedule: ") + e.what());
  }
}

json gantt_json(const TimedSchedule& s) {
  json jobs = json::array();
  int64_t start = 0;
  for (size_t i = 0; i < s.ticks.size(); ++i) {
    const Tick& t = s.ticks[i];
    int64_t at = start;
    int64_t copy = t.l_dm;
    for (const auto& d : t.dm) copy -= d.cycles;
    if (t.compute >= 0 && copy <= 0) {
      jobs.push_back({{"tick", i}, {"lane", "compute"}, {"job", "compute:" + std::to_string(t.compute)},
                      {"start", start}, {"end", start + t.l_c}});
    }
    if (t.compute >= 0 && copy > 0) {
      jobs.push_back({{"tick", i}, {"lane", "dm"}, {"job", "copy:" + std::to_string(t.compute)}, {"start", at},
                      {"end", at + copy}});
      at += copy;
    }
    for (const auto& d : t.dm) {
      jobs.push_back({{"tick", i}, {"lane", "dm"}, {"job", std::string(to_string(d.kind)) + ":" + std::to_string(d.tile)},
                      {"start", at}, {"end", at + d.cycles}});
      at += d.cycles;
    }
    start += t.latency();
  }
  return {{"jobs", jobs}, {"total_cycles", start}};
}

}  // namespace npucp
