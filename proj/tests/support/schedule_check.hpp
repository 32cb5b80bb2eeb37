#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "npucp/scheduler.hpp"

// Replays a timed schedule against the tile program without using scheduler code. A tile counts
// as resident from its arrival until its last use before it leaves again; backed tiles may be
// dropped for free in between.
inline std::vector<std::string> check_schedule(const npucp::TileProgram& p, const npucp::MachineModel& m,
                                               const npucp::TimedSchedule& s) {
  using npucp::JobKind;
  enum St { kNone, kDram, kTcm, kLtcm };
  std::vector<std::string> errors;
  auto err = [&](size_t tick, const std::string& what) { errors.push_back("tick " + std::to_string(tick) + ": " + what); };
  const int n = static_cast<int>(p.tiles.size());
  const int T = static_cast<int>(s.ticks.size());
  auto dram_cost = [&](int64_t bytes) { return (bytes + m.dram_bytes_per_cycle - 1) / m.dram_bytes_per_cycle + m.dm_fixed_overhead_cycles; };

  // Events per tile: arrival ticks (state from the next tick on), use ticks, departure ticks.
  std::vector<St> st(n, kNone);
  for (const auto& t : p.tiles) {
    if (t.dram_backed) st[t.id] = kDram;
  }
  std::vector<std::vector<std::pair<int, int>>> resident(n);  // [from, to] inclusive
  std::vector<int> since(n, -1), last_use(n, -1);
  auto leave = [&](int tile) {
    if (since[tile] >= 0) resident[tile].push_back({since[tile], std::max(since[tile], last_use[tile])});
    since[tile] = -1;
    last_use[tile] = -1;
  };
  auto use = [&](int tile, int tick) { last_use[tile] = std::max(last_use[tile], tick); };

  size_t next = 0;
  int64_t objective = 0, n_dm = 0;
  for (int t = 0; t < T; ++t) {
    const auto& tick = s.ticks[t];
    int64_t dm = 0;
    if (tick.compute >= 0) {
      const auto& c = p.tiles[tick.compute];
      if (next >= p.order.size() || p.order[next] != c.id) err(t, "compute out of program order: tile " + std::to_string(c.id));
      ++next;
      if (tick.l_c != c.compute_cycles) err(t, "compute latency mismatch");
      dm += c.copy_cycles;
      for (int d : c.deps) {
        const bool expanded = std::find(c.ltcm_deps.begin(), c.ltcm_deps.end(), d) != c.ltcm_deps.end();
        if (expanded ? st[d] != kLtcm : (st[d] != kTcm && st[d] != kLtcm)) {
          err(t, "dependency " + std::to_string(d) + " of tile " + std::to_string(c.id) + " not on chip");
        }
        use(d, t);
      }
      for (const auto& j : tick.dm) {
        const auto& o = p.tiles[j.tile];
        bool clash = j.tile == c.id;
        for (int b : [&] { auto v = c.deps; v.push_back(c.id); return v; }()) {
          const auto& bt = p.tiles[b];
          clash = clash || j.tile == b ||
                  (o.tensor == bt.tensor && o.low_bank <= bt.high_bank && bt.low_bank <= o.high_bank);
        }
        if (clash) err(t, "datamover job on tile " + std::to_string(j.tile) + " collides with the compute");
      }
    }
    for (const auto& j : tick.dm) {
      const auto& o = p.tiles[j.tile];
      int64_t cost = 0;
      switch (j.kind) {
        case JobKind::kFetch:
        case JobKind::kLfetch:
          if (st[o.id] == kTcm || st[o.id] == kLtcm) {
            if (!o.dram_backed) err(t, "fetch of a resident tile " + std::to_string(o.id));
            leave(o.id);
          } else if (st[o.id] != kDram) {
            err(t, "fetch of tile " + std::to_string(o.id) + " not in DRAM");
          }
          if (j.kind == JobKind::kLfetch && o.dups.empty()) err(t, "lfetch of a tile without expansion");
          st[o.id] = j.kind == JobKind::kFetch ? kTcm : kLtcm;
          since[o.id] = t;
          cost = dram_cost(j.kind == JobKind::kFetch ? o.plain_bytes : o.slot_bytes);
          break;
        case JobKind::kPush:
          if (st[o.id] != kTcm && st[o.id] != kLtcm) err(t, "push of tile " + std::to_string(o.id) + " not on chip");
          use(o.id, t);
          leave(o.id);
          st[o.id] = kDram;
          cost = dram_cost(o.plain_bytes);
          break;
        case JobKind::kLcopy:
          if (st[o.id] != kTcm) err(t, "lcopy of tile " + std::to_string(o.id) + " not in TCM");
          if (o.dups.empty()) err(t, "lcopy of a tile without expansion");
          use(o.id, t);
          st[o.id] = kLtcm;
          cost = (o.slot_bytes - o.plain_bytes + m.tcm_copy_bytes_per_cycle - 1) / m.tcm_copy_bytes_per_cycle +
                 m.dm_fixed_overhead_cycles;
          break;
      }
      if (cost != j.cycles) err(t, "job cost mismatch for tile " + std::to_string(o.id));
      dm += cost;
      ++n_dm;
    }
    if (dm != tick.l_dm) err(t, "datamover latency mismatch");
    objective += std::max(tick.l_c, dm) + s.delta * static_cast<int64_t>(tick.dm.size());
    if (tick.compute >= 0) {
      const int c = tick.compute;
      st[c] = kTcm;
      since[c] = t;  // output banks are written during the compute tick
    }
  }
  if (next != p.order.size()) err(T, "not every tile was computed");
  for (const auto& t : p.tiles) {
    if (t.model_output && st[t.id] != kDram) err(T, "model output tile " + std::to_string(t.id) + " not in DRAM");
    if (st[t.id] == kTcm || st[t.id] == kLtcm) leave(t.id);
  }
  if (objective != s.objective) err(T, "objective mismatch");
  if (n_dm != s.n_dm) err(T, "datamover count mismatch");

  // Capacity: per tensor, the span between the lowest and highest resident bank.
  for (int t = 0; t < T; ++t) {
    std::map<int, std::pair<int, int>> span;
    auto add = [&](int tensor, int lo, int hi) {
      auto it = span.find(tensor);
      if (it == span.end()) span[tensor] = {lo, hi};
      else it->second = {std::min(it->second.first, lo), std::max(it->second.second, hi)};
    };
    for (int j = 0; j < n; ++j) {
      const auto& tile = p.tiles[j];
      for (const auto& [from, to] : resident[j]) {
        if (t < from || t > to) continue;
        add(tile.tensor, tile.low_bank, tile.high_bank);
      }
    }
    int64_t used = 0;
    for (const auto& [tensor, lh] : span) used += lh.second - lh.first + 1;
    // A reusing output overlaps its input's range, which must start at the overwritten tile.
    if (s.ticks[t].compute >= 0) {
      if (const auto* r = p.reuse_for(s.ticks[t].compute)) {
        const auto& o = p.tiles[r->overwritable.front()];
        auto it = span.find(o.tensor);
        if (it == span.end() || it->second.first != o.low_bank) err(t, "reused input range does not start at the overwritten tile");
        used -= r->banks_saved;
      }
    }
    if (used > m.tcm_banks) err(t, "memory " + std::to_string(used) + " banks above capacity");
  }
  return errors;
}
